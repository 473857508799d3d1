import math

import numpy as np
import pytest

from rlbnb.branchers import (
    LARGE_GAIN,
    MostFractionalBranching,
    NeuralBranching,
    PolicyError,
    PseudocostBranching,
    RandomBranching,
    StrongBranching,
    _product_score,
    make_policy,
)
from rlbnb.engine import SearchTree, TreeNode, solve
from rlbnb.milp import MilpInstance, Row
from rlbnb.simplex import LocalBounds, solve_lp
from oracle import enumerate_lp


def make_instance(c, rows, lb, ub, is_integer=None, name="milp"):
    n = len(c)
    if is_integer is None:
        is_integer = [True] * n
    return MilpInstance(
        name=name, num_vars=n, num_cons=len(rows),
        objective=np.asarray(c, dtype=float), rows=rows,
        lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float),
        is_integer=np.asarray(is_integer, dtype=bool),
    )


def rooted_tree(inst):
    node = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())
    node.lp = solve_lp(inst)
    assert node.lp.status == "optimal"
    node.dual_bound = node.lp.objective
    return SearchTree(instance=inst, nodes=[node]), node


def two_candidate_instance():
    # both variables fractional at the root: x0 + x1 <= 1.5 twice over
    return make_instance(
        [-1.0, -1.0, -2.0],
        [Row([(0, 1.0), (1, 1.0)], 1.0, "<="),
         Row([(1, 1.0), (2, 1.0)], 1.5, "<="),
         Row([(0, 1.0), (2, 1.0)], 1.5, "<=")],
        [0, 0, 0], [1, 1, 1],
    )


def test_product_score_prefers_balanced_gains():
    # gains (1.0, 1.0) score 1.0; gains (0.1, 2.0) score 0.2
    assert _product_score(1.0, 1.0) > _product_score(0.1, 2.0)
    assert _product_score(0.1, 2.0) == pytest.approx(0.2)


def test_strong_branching_single_candidate():
    inst = make_instance(
        [-1.0, -2.0],
        [Row([(0, 1.0), (1, 1.0)], 1.5, "<=")],
        [0, 0], [1, 1],
    )
    tree, node = rooted_tree(inst)
    sb = StrongBranching()
    assert sb.choose(tree, node, [0], np.random.default_rng(0)) == 0


def test_strong_branching_agrees_with_oracle_gains():
    inst = two_candidate_instance()
    tree, node = rooted_tree(inst)
    cands = node.lp.fractional_set
    assert len(cands) >= 2
    scores = {}
    for j in cands:
        gains = []
        x_j = node.lp.x[j]
        for lo_d, hi_d in ((None, math.floor(x_j)), (math.ceil(x_j), None)):
            lb = inst.lb.copy()
            ub = inst.ub.copy()
            if lo_d is not None:
                lb[j] = lo_d
            if hi_d is not None:
                ub[j] = hi_d
            status, obj, _ = enumerate_lp(inst, lb=lb, ub=ub)
            gains.append(LARGE_GAIN if status == "infeasible" else obj - node.lp.objective)
        scores[j] = _product_score(gains[0], gains[1])
    want = min((j for j in cands), key=lambda j: (-scores[j], j))
    sb = StrongBranching()
    got = sb.choose(tree, node, cands, np.random.default_rng(0))
    assert got == want
    assert sb.probing_iterations > 0


def test_strong_branching_prefers_infeasible_children():
    # x0 = 0.5 forced; either branch of x0 is infeasible -> dominant score
    inst = make_instance(
        [0.0, -1.0],
        [Row([(0, 2.0)], 1.0, "="),
         Row([(1, 1.0), (0, 1.0)], 2.0, "<=")],
        [0, 0], [1, 3],
    )
    tree, node = rooted_tree(inst)
    cands = node.lp.fractional_set
    assert 0 in cands and len(cands) >= 2
    sb = StrongBranching()
    assert sb.choose(tree, node, cands, np.random.default_rng(0)) == 0


def test_pseudocost_uninitialised_ties_break_low():
    inst = two_candidate_instance()
    tree, node = rooted_tree(inst)
    pb = PseudocostBranching()
    cands = node.lp.fractional_set
    frac = {j: node.lp.x[j] - math.floor(node.lp.x[j]) for j in cands}
    if len({round(f, 9) for f in frac.values()}) == 1:
        assert pb.choose(tree, node, cands, np.random.default_rng(0)) == cands[0]


def test_pseudocost_prefers_higher_history():
    inst = two_candidate_instance()
    tree, node = rooted_tree(inst)
    cands = node.lp.fractional_set
    pb = PseudocostBranching()
    for direction in ("down", "up"):
        pb.update(cands[0], direction, 1.0)
        pb.update(cands[1], direction, 4.0)
    frac0 = node.lp.x[cands[0]] % 1.0
    frac1 = node.lp.x[cands[1]] % 1.0
    if abs(frac0 - frac1) < 1e-9:
        assert pb.choose(tree, node, cands, np.random.default_rng(0)) == cands[1]


def test_pseudocost_update_arithmetic():
    pb = PseudocostBranching()
    node = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())

    class StubLp:
        status = "optimal"

        def __init__(self, obj):
            self.objective = obj

    node.lp = StubLp(0.0)
    pb.observe_branching(None, node, 3, 0.5, StubLp(0.5), StubLp(1.0))
    # down unit gain 0.5/0.5 = 1.0; up unit gain 1.0/0.5 = 2.0
    assert pb._mean(3, "down", 0.0) == pytest.approx(1.0)
    assert pb._mean(3, "up", 0.0) == pytest.approx(2.0)


def test_random_seeded_deterministic():
    policy = RandomBranching()
    pick1 = policy.choose(None, None, [3, 5, 9], np.random.default_rng(42))
    pick2 = policy.choose(None, None, [3, 5, 9], np.random.default_rng(42))
    assert pick1 == pick2
    assert pick1 in (3, 5, 9)


def test_most_fractional_picks_half():
    inst = make_instance(
        [-1.0, -2.0],
        [Row([(0, 1.0), (1, 1.0)], 1.5, "<=")],
        [0, 0], [1, 1],
    )
    tree, node = rooted_tree(inst)

    class FakeNode:
        class lp:
            x = np.array([0.5, 0.9])

    assert MostFractionalBranching().choose(None, FakeNode, [0, 1], None) == 0


def test_single_candidate_everywhere():
    rng = np.random.default_rng(0)
    for policy in (RandomBranching(), MostFractionalBranching(), PseudocostBranching()):
        inst = make_instance(
            [-1.0, -2.0],
            [Row([(0, 1.0), (1, 1.0)], 1.5, "<=")],
            [0, 0], [1, 1],
        )
        tree, node = rooted_tree(inst)
        assert policy.choose(tree, node, [0], rng) == 0


class FixedQ(NeuralBranching):
    def __init__(self, q, **kw):
        super().__init__(params=None, **kw)
        self._q = np.asarray(q, dtype=float)

    def q_values(self, state, candidates):
        return self._q[list(candidates)]


class FakeTree:
    def __init__(self, n):
        self.states = {0: object()}


class FakeNode:
    id = 0


def test_neural_greedy_argmax():
    policy = FixedQ([-1.0, -5.0], mode="greedy")
    assert policy.choose(FakeTree(2), FakeNode, [0, 1], np.random.default_rng(0)) == 0


def test_neural_greedy_scale_invariant():
    rng = np.random.default_rng(0)
    q = np.array([-0.3, -0.1, -0.7, -0.2])
    base = FixedQ(q, mode="greedy").choose(FakeTree(4), FakeNode, [0, 1, 2, 3], rng)
    scaled = FixedQ(5.0 * q, mode="greedy").choose(FakeTree(4), FakeNode, [0, 1, 2, 3], rng)
    assert base == scaled == 1


def test_neural_epsilon_one_is_uniform():
    policy = FixedQ([100.0, -100.0], mode="epsilon_stochastic", epsilon=1.0)
    rng = np.random.default_rng(7)
    picks = [policy.choose(FakeTree(2), FakeNode, [0, 1], rng) for _ in range(4000)]
    freq = np.mean([p == 0 for p in picks])
    assert freq == pytest.approx(0.5, abs=0.03)


def test_neural_softmax_symmetric():
    policy = FixedQ([0.0, 0.0], mode="epsilon_stochastic", epsilon=0.0)
    rng = np.random.default_rng(11)
    picks = [policy.choose(FakeTree(2), FakeNode, [0, 1], rng) for _ in range(10_000)]
    freq = np.mean([p == 0 for p in picks])
    assert freq == pytest.approx(0.5, abs=0.02)


def test_neural_rejects_nonfinite_q():
    policy = FixedQ([np.nan, 0.0], mode="greedy")
    with pytest.raises(PolicyError):
        policy.choose(FakeTree(2), FakeNode, [0, 1], np.random.default_rng(0))


def test_make_policy_names():
    assert make_policy("sb").name == "strong_branching"
    assert make_policy("pb").name == "pseudocost"
    assert make_policy("random").name == "random"
    assert make_policy("mf").name == "most_fractional"
    with pytest.raises(ValueError):
        make_policy("nonsense")
