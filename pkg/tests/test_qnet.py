import numpy as np
import pytest

from rlbnb.features import BipartiteState
from rlbnb.qnet import (
    AdamState,
    CheckpointError,
    QNetworkParams,
    adam_step,
    backward,
    forward,
    forward_many,
    global_norm,
    init,
    load,
    save,
    soft_update,
)


def random_state(rng, n=3, m=2, var_dim=39, cons_dim=5, scale=1.0):
    nnz = max(1, int(rng.integers(1, n * m + 1)))
    ci = rng.integers(0, m, size=nnz)
    vi = rng.integers(0, n, size=nnz)
    mask = np.zeros(n, dtype=bool)
    mask[rng.integers(0, n)] = True
    return BipartiteState(
        var_features=rng.normal(size=(n, var_dim)) * scale,
        cons_features=rng.normal(size=(m, cons_dim)) * scale,
        edge_index=np.vstack([ci, vi]),
        edge_features=rng.normal(size=nnz) * scale,
        candidate_mask=mask,
        focus_node_id=0,
    )


def test_init_deterministic():
    a, b = init(7), init(7)
    assert a.allclose(b)
    c = init(8)
    assert not a.allclose(c)


def test_init_layernorm_and_bias_values():
    p = init(0)
    assert (p.tensors["var_ln_g"] == 1.0).all()
    assert (p.tensors["var_ln_b"] == 0.0).all()
    assert (p.tensors["out1_b"] == 0.0).all()


def test_init_weight_statistics():
    p = init(3)
    samples = np.concatenate([
        p.tensors["var_embed_w"].ravel(),
        p.tensors["vc_upd_w"].ravel(),
        p.tensors["cv_upd_w"].ravel(),
    ])
    assert len(samples) > 10_000
    tol = 3 * 0.01 / np.sqrt(len(samples))
    assert abs(samples.mean()) < tol
    assert samples.std() == pytest.approx(0.01, rel=0.1)


def test_forward_finite_and_deterministic():
    rng = np.random.default_rng(0)
    state = random_state(rng, n=5, m=4)
    p = init(1)
    q1, _ = forward(p, state)
    q2, _ = forward(p, state)
    assert q1.shape == (5,)
    assert np.isfinite(q1).all()
    assert np.array_equal(q1, q2)


def test_forward_large_feature_magnitudes():
    rng = np.random.default_rng(4)
    state = random_state(rng, n=6, m=4, scale=1e3)
    q, _ = forward(init(2), state)
    assert np.isfinite(q).all()


def test_identical_feature_rows_give_constant_q():
    # symmetry: all-zero features and no distinguishing edges -> constant output
    state = BipartiteState(
        var_features=np.zeros((4, 39)),
        cons_features=np.zeros((2, 5)),
        edge_index=np.array([[0, 0, 1, 1], [0, 1, 2, 3]]),
        edge_features=np.zeros(4),
        candidate_mask=np.ones(4, dtype=bool),
        focus_node_id=0,
    )
    q, _ = forward(init(5), state)
    assert np.allclose(q, q[0], atol=1e-9)


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    state = random_state(rng, n=6, m=3)
    p = init(3)
    q, _ = forward(p, state)
    perm = rng.permutation(6)
    permuted = BipartiteState(
        var_features=state.var_features[perm],
        cons_features=state.cons_features,
        edge_index=np.vstack([state.edge_index[0],
                              np.argsort(perm)[state.edge_index[1]]]),
        edge_features=state.edge_features,
        candidate_mask=state.candidate_mask[perm],
        focus_node_id=0,
    )
    q_perm, _ = forward(p, permuted)
    assert np.allclose(q_perm, q[perm], atol=1e-10)


def test_batch_matches_individual():
    rng = np.random.default_rng(5)
    states = [random_state(rng, n=int(rng.integers(2, 7)), m=int(rng.integers(1, 5)))
              for _ in range(4)]
    p = init(9)
    qs, _ = forward_many(p, states)
    for st, q_batch in zip(states, qs):
        q_solo, _ = forward(p, st)
        assert np.allclose(q_batch, q_solo, atol=1e-6)


def test_golden_forward_small_net():
    """Independent straight-line recomputation with dense adjacency handling."""
    rng = np.random.default_rng(11)
    n, m, emb = 3, 2, 4
    p = init(13, emb_size=emb, var_dim=6, cons_dim=3)
    state = random_state(rng, n=n, m=m, var_dim=6, cons_dim=3)
    q, _ = forward(p, state)

    def ln(x, g, b, eps=1e-5):
        mu = x.mean(axis=1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
        return (x - mu) / np.sqrt(var + eps) * g + b

    def leaky(z):
        return np.where(z > 0, z, 0.01 * z)

    t = p.tensors
    hv = ln(state.var_features @ t["var_embed_w"] + t["var_embed_b"],
            t["var_ln_g"], t["var_ln_b"])
    hc = ln(state.cons_features @ t["cons_embed_w"] + t["cons_embed_b"],
            t["cons_ln_g"], t["cons_ln_b"])
    he = state.edge_features[:, None] @ t["edge_embed_w"] + t["edge_embed_b"]
    agg_c = np.zeros((m, emb))
    for row in range(m):
        msgs = [hv[state.edge_index[1][e]] @ t["vc_msg_w"] + t["vc_msg_b"] + he[e]
                for e in range(len(state.edge_features))
                if state.edge_index[0][e] == row]
        if msgs:
            agg_c[row] = np.mean(msgs, axis=0)
    hc2 = leaky(ln(np.concatenate([hc, agg_c], axis=1) @ t["vc_upd_w"]
                   + t["vc_upd_b"], t["vc_ln_g"], t["vc_ln_b"]))
    agg_v = np.zeros((n, emb))
    for col in range(n):
        msgs = [hc2[state.edge_index[0][e]] @ t["cv_msg_w"] + t["cv_msg_b"] + he[e]
                for e in range(len(state.edge_features))
                if state.edge_index[1][e] == col]
        if msgs:
            agg_v[col] = np.mean(msgs, axis=0)
    hv2 = leaky(ln(np.concatenate([hv, agg_v], axis=1) @ t["cv_upd_w"]
                   + t["cv_upd_b"], t["cv_ln_g"], t["cv_ln_b"]))
    r1 = leaky(hv2 @ t["out1_w"] + t["out1_b"])
    want = -leaky(r1 @ t["out2_w"] + t["out2_b"])[:, 0]
    assert np.allclose(q, want, atol=1e-12)


def loss_and_grads(params, state, dq):
    q, cache = forward(params, state)
    grads = backward(params, cache, [dq])
    return float(q @ dq), grads


def scaled_params(seed, scale=50.0):
    """Weights pushed away from the leaky-relu kinks so h=1e-4 stays one-sided."""
    p = init(seed, emb_size=4, var_dim=6, cons_dim=3)
    for name, t in p.tensors.items():
        if name.endswith("_w"):
            t *= scale
    return p


def test_gradcheck_finite_differences():
    rng = np.random.default_rng(21)
    max_rel = 0.0
    for trial in range(3):
        p = scaled_params(trial)
        state = random_state(rng, n=3, m=2, var_dim=6, cons_dim=3)
        dq = rng.normal(size=3)
        _, grads = loss_and_grads(p, state, dq)
        h = 1e-4
        for name, tensor in p.tensors.items():
            flat = tensor.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up, _ = forward(p, state)
                flat[idx] = orig - h
                dn, _ = forward(p, state)
                flat[idx] = orig
                num = (float(up @ dq) - float(dn @ dq)) / (2 * h)
                ana = grads[name].ravel()[idx]
                rel = abs(ana - num) / max(abs(ana) + abs(num), 1e-8)
                max_rel = max(max_rel, rel)
    assert max_rel < 1e-4


def test_backward_zero_upstream_and_linearity():
    rng = np.random.default_rng(31)
    p = init(0, emb_size=8, var_dim=6, cons_dim=3)
    state = random_state(rng, n=4, m=3, var_dim=6, cons_dim=3)
    q, cache = forward(p, state)
    zeros = backward(p, cache, [np.zeros(4)])
    assert all((g == 0).all() for g in zeros.values())
    dq = rng.normal(size=4)
    g1 = backward(p, cache, [dq])
    g2 = backward(p, cache, [2.0 * dq])
    for k in g1:
        assert np.allclose(g2[k], 2.0 * g1[k], atol=1e-12)


def test_backward_requires_cache():
    p = init(0)
    with pytest.raises(ValueError):
        backward(p, None, [np.zeros(3)])


def test_adam_zero_gradient_keeps_params():
    p = init(1, emb_size=4, var_dim=6, cons_dim=3)
    before = p.copy()
    adam = AdamState.for_params(p, lr=1e-3)
    adam_step(p, p.zeros_like(), adam)
    assert adam.step == 1
    assert p.allclose(before)


def test_adam_clip_scales_by_half():
    p = init(1, emb_size=4, var_dim=6, cons_dim=3)
    grads = p.zeros_like()
    # construct a gradient of global norm 20 concentrated on one tensor
    g = np.zeros_like(grads["out1_w"])
    g.flat[0] = 20.0
    grads["out1_w"] = g
    assert global_norm(grads) == pytest.approx(20.0)
    adam = AdamState.for_params(p, lr=1.0)
    before = p.tensors["out1_w"].flat[0]
    adam_step(p, grads, adam, clip=10.0)
    # after clipping the effective first-step update is lr * sign(g)
    moved = before - p.tensors["out1_w"].flat[0]
    assert moved == pytest.approx(1.0, rel=1e-6)
    # and the Adam moments saw the clipped gradient 10.0
    assert adam.m["out1_w"].flat[0] == pytest.approx(1.0)  # 0.1 * 10


def test_adam_matches_closed_form_scalar():
    p = init(1, emb_size=4, var_dim=6, cons_dim=3)
    adam = AdamState.for_params(p, lr=0.5)
    grads = p.zeros_like()
    grads["out2_b"] = np.array([2.0])
    before = float(p.tensors["out2_b"][0])
    adam_step(p, grads, adam, clip=10.0)
    m = 0.1 * 2.0
    v = 0.001 * 4.0
    mhat = m / (1 - 0.9)
    vhat = v / (1 - 0.999)
    want = before - 0.5 * mhat / (np.sqrt(vhat) + 1e-8)
    assert p.tensors["out2_b"][0] == pytest.approx(want, abs=1e-12)


def test_soft_update_converges_geometrically():
    online = init(2, emb_size=4, var_dim=6, cons_dim=3)
    target = init(3, emb_size=4, var_dim=6, cons_dim=3)
    tau = 0.25
    gap0 = global_norm({k: target.tensors[k] - online.tensors[k]
                        for k in online.tensors})
    for step in range(1, 6):
        soft_update(target, online, tau)
        gap = global_norm({k: target.tensors[k] - online.tensors[k]
                           for k in online.tensors})
        assert gap == pytest.approx(gap0 * (1 - tau) ** step, rel=1e-9)


def test_soft_update_tau_one_copies():
    online = init(2, emb_size=4, var_dim=6, cons_dim=3)
    target = init(3, emb_size=4, var_dim=6, cons_dim=3)
    soft_update(target, online, 1.0)
    assert target.allclose(online)


def test_target_identical_params_identical_forward():
    rng = np.random.default_rng(8)
    p = init(4)
    t = p.copy()
    state = random_state(rng, n=5, m=3)
    q1, _ = forward(p, state)
    q2, _ = forward(t, state)
    assert np.array_equal(q1, q2)


def test_save_load_roundtrip_bitwise(tmp_path):
    p = init(6)
    path = tmp_path / "net.qnet.json"
    save(p, path)
    again = load(path)
    for k in p.tensors:
        assert np.array_equal(p.tensors[k], again.tensors[k])
    rng = np.random.default_rng(10)
    state = random_state(rng, n=4, m=2)
    q1, _ = forward(p, state)
    q2, _ = forward(again, state)
    assert np.array_equal(q1, q2)


def test_load_rejects_feature_version_mismatch(tmp_path):
    p = init(6)
    p.feature_version = "bipartite-v0-legacy"
    path = tmp_path / "old.qnet.json"
    save(p, path)
    with pytest.raises(CheckpointError) as err:
        load(path)
    assert "bipartite-v0-legacy" in str(err.value)
    assert "bipartite-v1" in str(err.value)


def test_load_rejects_truncated_file(tmp_path):
    p = init(6)
    path = tmp_path / "net.qnet.json"
    save(p, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load(path)
