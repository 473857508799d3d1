import numpy as np
import pytest

from rlbnb.replay import PrioritizedReplay, SumTree


def test_sumtree_total_and_find():
    tree = SumTree(4)
    for i, w in enumerate([1.0, 2.0, 3.0, 4.0]):
        tree.update(i, w)
    assert tree.total == pytest.approx(10.0)
    assert tree.find(0.5) == 0
    assert tree.find(1.5) == 1
    assert tree.find(3.5) == 2
    assert tree.find(9.9) == 3


def test_sumtree_update_overwrites():
    tree = SumTree(2)
    tree.update(0, 5.0)
    tree.update(0, 1.0)
    tree.update(1, 1.0)
    assert tree.total == pytest.approx(2.0)


def test_buffer_capacity_ring():
    buf = PrioritizedReplay(capacity=3, alpha=1.0)
    for i in range(7):
        buf.add(i)
    assert len(buf) == 3
    assert sorted(x for x in buf.items) == [4, 5, 6]


def test_uniform_sampling_when_equal_priorities():
    buf = PrioritizedReplay(capacity=8, alpha=0.6)
    for i in range(8):
        buf.add(i)
    rng = np.random.default_rng(1)
    idx, _, _ = buf.sample(100_000, beta=1.0, rng=rng)
    counts = np.bincount(idx, minlength=8)
    expected = 100_000 / 8
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # chi-square with 7 dof: p > 0.01 corresponds to chi2 < 18.48
    assert chi2 < 18.48


def test_proportional_sampling_alpha_one():
    buf = PrioritizedReplay(capacity=4, alpha=1.0, min_priority=0.0)
    for i in range(4):
        buf.add(i)
    buf.update_priorities([0, 1, 2, 3], [10.0, 1.0, 1.0, 1.0])
    rng = np.random.default_rng(1)
    idx, _, _ = buf.sample(130_000, beta=0.0, rng=rng)
    counts = np.bincount(idx, minlength=4)
    ratio = counts[0] / max(counts[1:].mean(), 1)
    assert ratio == pytest.approx(10.0, rel=0.1)


def test_weights_all_one_when_beta_one_and_equal():
    buf = PrioritizedReplay(capacity=4, alpha=0.6)
    for i in range(4):
        buf.add(i)
    rng = np.random.default_rng(2)
    _, _, weights = buf.sample(64, beta=1.0, rng=rng)
    assert np.allclose(weights, 1.0)


def test_new_items_inserted_at_max_priority():
    buf = PrioritizedReplay(capacity=8, alpha=1.0)
    buf.add("a")
    buf.update_priorities([0], [99.0])
    buf.add("b")
    assert buf.priorities[1] == pytest.approx(99.0 + buf.min_priority)
    assert buf.tree.get(1) >= buf.tree.get(0)


def test_priorities_floor_at_min_priority():
    buf = PrioritizedReplay(capacity=2, alpha=1.0, min_priority=1e-3)
    buf.add("a")
    buf.update_priorities([0], [0.0])
    assert buf.priorities[0] == pytest.approx(1e-3)


def test_deterministic_given_rng():
    buf = PrioritizedReplay(capacity=16, alpha=0.6)
    for i in range(16):
        buf.add(i)
    i1, _, w1 = buf.sample(32, beta=0.4, rng=np.random.default_rng(7))
    i2, _, w2 = buf.sample(32, beta=0.4, rng=np.random.default_rng(7))
    assert np.array_equal(i1, i2)
    assert np.array_equal(w1, w2)


def test_sample_empty_buffer_raises():
    buf = PrioritizedReplay(capacity=4)
    with pytest.raises(ValueError):
        buf.sample(4, beta=0.4, rng=np.random.default_rng(0))


def test_partial_fill_never_samples_empty_slots():
    buf = PrioritizedReplay(capacity=8, alpha=0.6)
    for i in range(3):
        buf.add(i)
    idx, items, _ = buf.sample(1000, beta=0.4, rng=np.random.default_rng(3))
    assert set(idx) <= {0, 1, 2}
    assert all(it is not None for it in items)
