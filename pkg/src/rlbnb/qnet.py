"""Bipartite graph-convolution Q-network with hand-written forward/backward.

Topology: separate linear+layernorm embeddings for variable and constraint
nodes, a linear edge embedding, one interleaved half-convolution pair
(variables -> constraints, then constraints -> variables) whose messages are a
linear map of the neighbour embedding plus the edge embedding (mean
aggregation, no joint message MLP), and a two-layer readout whose final
activation is inverted, y = -leaky_relu(z), so outputs live in the
non-positive range of the -1-per-step returns.

Parameters are float64 end to end; checkpoints store the exact bytes so a
save/load round-trip is bit-identical.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_VERSION, NUM_CONS_FEATURES, NUM_VAR_FEATURES

LEAKY_SLOPE = 0.01
LN_EPS = 1e-5
EMB_SIZE = 64
ARCHITECTURE = "halfconv-mean-inverted-leaky-v1"

CHECKPOINT_FORMAT = "qnet-checkpoint"


class CheckpointError(ValueError):
    pass


def _param_shapes(emb: int, var_dim: int, cons_dim: int) -> dict[str, tuple]:
    return {
        "var_embed_w": (var_dim, emb), "var_embed_b": (emb,),
        "var_ln_g": (emb,), "var_ln_b": (emb,),
        "cons_embed_w": (cons_dim, emb), "cons_embed_b": (emb,),
        "cons_ln_g": (emb,), "cons_ln_b": (emb,),
        "edge_embed_w": (1, emb), "edge_embed_b": (emb,),
        "vc_msg_w": (emb, emb), "vc_msg_b": (emb,),
        "vc_upd_w": (2 * emb, emb), "vc_upd_b": (emb,),
        "vc_ln_g": (emb,), "vc_ln_b": (emb,),
        "cv_msg_w": (emb, emb), "cv_msg_b": (emb,),
        "cv_upd_w": (2 * emb, emb), "cv_upd_b": (emb,),
        "cv_ln_g": (emb,), "cv_ln_b": (emb,),
        "out1_w": (emb, emb), "out1_b": (emb,),
        "out2_w": (emb, 1), "out2_b": (1,),
    }


@dataclass
class QNetworkParams:
    tensors: dict[str, np.ndarray]
    emb_size: int = EMB_SIZE
    var_dim: int = NUM_VAR_FEATURES
    cons_dim: int = NUM_CONS_FEATURES
    feature_version: str = FEATURE_VERSION
    architecture: str = ARCHITECTURE

    def copy(self) -> "QNetworkParams":
        return QNetworkParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            emb_size=self.emb_size,
            var_dim=self.var_dim,
            cons_dim=self.cons_dim,
            feature_version=self.feature_version,
            architecture=self.architecture,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def allclose(self, other: "QNetworkParams", atol: float = 0.0) -> bool:
        return all(np.allclose(self.tensors[k], other.tensors[k], atol=atol)
                   for k in self.tensors)


def init(seed: int, emb_size: int = EMB_SIZE, var_dim: int = NUM_VAR_FEATURES,
         cons_dim: int = NUM_CONS_FEATURES) -> QNetworkParams:
    """Normal(0, 0.01) linear weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in _param_shapes(emb_size, var_dim, cons_dim).items():
        if name.endswith("_ln_g"):
            tensors[name] = np.ones(shape)
        elif name.endswith(("_b",)):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, 0.01, size=shape)
    return QNetworkParams(tensors, emb_size, var_dim, cons_dim)


def _leaky(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_grad(z):
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def _layernorm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_back(dy, cache, g):
    xhat, inv = cache
    d = xhat.shape[1]
    dxhat = dy * g
    dx = inv / d * (d * dxhat - dxhat.sum(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    return dx, dg, db


def _scatter_mean(values, index, size):
    acc = np.zeros((size, values.shape[1]))
    np.add.at(acc, index, values)
    counts = np.bincount(index, minlength=size).astype(float)
    denom = np.maximum(counts, 1.0)
    return acc / denom[:, None], denom


def _pack(states):
    """Disjoint union of a list of states into one graph, with split offsets."""
    var_off, cons_off, edge_off = [0], [0], [0]
    vf, cf, ef, ci, vi = [], [], [], [], []
    for st in states:
        vf.append(st.var_features)
        cf.append(st.cons_features)
        ef.append(st.edge_features)
        ci.append(st.edge_index[0] + cons_off[-1])
        vi.append(st.edge_index[1] + var_off[-1])
        var_off.append(var_off[-1] + st.var_features.shape[0])
        cons_off.append(cons_off[-1] + st.cons_features.shape[0])
        edge_off.append(edge_off[-1] + st.edge_features.shape[0])
    return (
        np.concatenate(vf, axis=0),
        np.concatenate(cf, axis=0),
        np.concatenate(ef, axis=0),
        np.concatenate(ci),
        np.concatenate(vi),
        var_off,
    )


def forward(params: QNetworkParams, state):
    """Per-variable Q-values for one state. Returns (q, cache) for backward."""
    qs, cache = forward_many(params, [state])
    return qs[0], cache


def forward_many(params: QNetworkParams, states):
    """Batch of states evaluated as one disjoint-union graph."""
    p = params.tensors
    vf, cf, ef, ci, vi, var_off = _pack(states)
    n, m = vf.shape[0], cf.shape[0]

    hv_lin = vf @ p["var_embed_w"] + p["var_embed_b"]
    hv, hv_ln = _layernorm(hv_lin, p["var_ln_g"], p["var_ln_b"])
    hc_lin = cf @ p["cons_embed_w"] + p["cons_embed_b"]
    hc, hc_ln = _layernorm(hc_lin, p["cons_ln_g"], p["cons_ln_b"])
    he = ef[:, None] @ p["edge_embed_w"] + p["edge_embed_b"]

    # variables -> constraints
    msg_vc = hv[vi] @ p["vc_msg_w"] + p["vc_msg_b"] + he
    agg_c, cnt_c = _scatter_mean(msg_vc, ci, m)
    upd_c_in = np.concatenate([hc, agg_c], axis=1)
    upd_c_lin = upd_c_in @ p["vc_upd_w"] + p["vc_upd_b"]
    upd_c_norm, c_ln = _layernorm(upd_c_lin, p["vc_ln_g"], p["vc_ln_b"])
    hc2 = _leaky(upd_c_norm)

    # constraints -> variables
    msg_cv = hc2[ci] @ p["cv_msg_w"] + p["cv_msg_b"] + he
    agg_v, cnt_v = _scatter_mean(msg_cv, vi, n)
    upd_v_in = np.concatenate([hv, agg_v], axis=1)
    upd_v_lin = upd_v_in @ p["cv_upd_w"] + p["cv_upd_b"]
    upd_v_norm, v_ln = _layernorm(upd_v_lin, p["cv_ln_g"], p["cv_ln_b"])
    hv2 = _leaky(upd_v_norm)

    # readout, inverted leaky relu on the last layer
    r1_lin = hv2 @ p["out1_w"] + p["out1_b"]
    r1 = _leaky(r1_lin)
    z = r1 @ p["out2_w"] + p["out2_b"]
    q = -_leaky(z)[:, 0]

    cache = {
        "vf": vf, "cf": cf, "ef": ef, "ci": ci, "vi": vi, "var_off": var_off,
        "hv": hv, "hv_ln": hv_ln, "hc": hc, "hc_ln": hc_ln,
        "msg_vc": msg_vc, "cnt_c": cnt_c, "upd_c_in": upd_c_in,
        "upd_c_norm": upd_c_norm, "c_ln": c_ln, "hc2": hc2,
        "msg_cv": msg_cv, "cnt_v": cnt_v, "upd_v_in": upd_v_in,
        "upd_v_norm": upd_v_norm, "v_ln": v_ln, "hv2": hv2,
        "r1_lin": r1_lin, "r1": r1, "z": z,
    }
    qs = [q[var_off[i]:var_off[i + 1]] for i in range(len(states))]
    return qs, cache


def backward(params: QNetworkParams, cache, dq) -> dict[str, np.ndarray]:
    """Gradients of sum(dq * q) w.r.t. every parameter tensor.

    ``dq`` is one array per state passed to the matching forward call.
    """
    if cache is None:
        raise ValueError("backward called without a forward cache")
    p = params.tensors
    if isinstance(dq, (list, tuple)):
        dq_full = np.concatenate(dq)
    else:
        dq_full = np.asarray(dq)
    grads = {}

    z = cache["z"]
    dz = (-dq_full)[:, None] * _leaky_grad(z)
    grads["out2_w"] = cache["r1"].T @ dz
    grads["out2_b"] = dz.sum(axis=0)
    dr1 = dz @ p["out2_w"].T
    dr1_lin = dr1 * _leaky_grad(cache["r1_lin"])
    grads["out1_w"] = cache["hv2"].T @ dr1_lin
    grads["out1_b"] = dr1_lin.sum(axis=0)
    dhv2 = dr1_lin @ p["out1_w"].T

    dupd_v_norm = dhv2 * _leaky_grad(cache["upd_v_norm"])
    dupd_v_lin, grads["cv_ln_g"], grads["cv_ln_b"] = _layernorm_back(
        dupd_v_norm, cache["v_ln"], p["cv_ln_g"])
    grads["cv_upd_w"] = cache["upd_v_in"].T @ dupd_v_lin
    grads["cv_upd_b"] = dupd_v_lin.sum(axis=0)
    dupd_v_in = dupd_v_lin @ p["cv_upd_w"].T
    emb = params.emb_size
    dhv_direct = dupd_v_in[:, :emb]
    dagg_v = dupd_v_in[:, emb:]

    dmsg_cv = dagg_v[cache["vi"]] / cache["cnt_v"][cache["vi"], None]
    grads["cv_msg_w"] = cache["hc2"][cache["ci"]].T @ dmsg_cv
    grads["cv_msg_b"] = dmsg_cv.sum(axis=0)
    dhe = dmsg_cv.copy()
    dhc2 = np.zeros_like(cache["hc2"])
    np.add.at(dhc2, cache["ci"], dmsg_cv @ p["cv_msg_w"].T)

    dupd_c_norm = dhc2 * _leaky_grad(cache["upd_c_norm"])
    dupd_c_lin, grads["vc_ln_g"], grads["vc_ln_b"] = _layernorm_back(
        dupd_c_norm, cache["c_ln"], p["vc_ln_g"])
    grads["vc_upd_w"] = cache["upd_c_in"].T @ dupd_c_lin
    grads["vc_upd_b"] = dupd_c_lin.sum(axis=0)
    dupd_c_in = dupd_c_lin @ p["vc_upd_w"].T
    dhc_direct = dupd_c_in[:, :emb]
    dagg_c = dupd_c_in[:, emb:]

    dmsg_vc = dagg_c[cache["ci"]] / cache["cnt_c"][cache["ci"], None]
    grads["vc_msg_w"] = cache["hv"][cache["vi"]].T @ dmsg_vc
    grads["vc_msg_b"] = dmsg_vc.sum(axis=0)
    dhe += dmsg_vc
    dhv_from_msg = np.zeros_like(cache["hv"])
    np.add.at(dhv_from_msg, cache["vi"], dmsg_vc @ p["vc_msg_w"].T)

    grads["edge_embed_w"] = cache["ef"][None, :] @ dhe
    grads["edge_embed_b"] = dhe.sum(axis=0)

    dhc = dhc_direct
    dhc_lin, grads["cons_ln_g"], grads["cons_ln_b"] = _layernorm_back(
        dhc, cache["hc_ln"], p["cons_ln_g"])
    grads["cons_embed_w"] = cache["cf"].T @ dhc_lin
    grads["cons_embed_b"] = dhc_lin.sum(axis=0)

    dhv = dhv_direct + dhv_from_msg
    dhv_lin, grads["var_ln_g"], grads["var_ln_b"] = _layernorm_back(
        dhv, cache["hv_ln"], p["var_ln_g"])
    grads["var_embed_w"] = cache["vf"].T @ dhv_lin
    grads["var_embed_b"] = dhv_lin.sum(axis=0)

    return grads


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: QNetworkParams, lr: float = 5e-5) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(t) for k, t in params.tensors.items()},
            v={k: np.zeros_like(t) for k, t in params.tensors.items()},
        )


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def adam_step(params: QNetworkParams, grads: dict[str, np.ndarray],
              adam: AdamState, clip: float = 10.0) -> QNetworkParams:
    """Global-norm gradient clipping followed by one Adam update, in place."""
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise FloatingPointError(f"non-finite gradient norm {norm}")
    scale = clip / norm if (clip is not None and norm > clip) else 1.0
    adam.step += 1
    b1c = 1.0 - adam.beta1 ** adam.step
    b2c = 1.0 - adam.beta2 ** adam.step
    for k, g in grads.items():
        g = g * scale
        adam.m[k] = adam.beta1 * adam.m[k] + (1.0 - adam.beta1) * g
        adam.v[k] = adam.beta2 * adam.v[k] + (1.0 - adam.beta2) * g * g
        mhat = adam.m[k] / b1c
        vhat = adam.v[k] / b2c
        params.tensors[k] -= adam.lr * mhat / (np.sqrt(vhat) + adam.eps)
    return params


def soft_update(target: QNetworkParams, online: QNetworkParams, tau: float) -> None:
    """Polyak averaging: target <- tau * online + (1 - tau) * target."""
    for k in target.tensors:
        target.tensors[k] *= 1.0 - tau
        target.tensors[k] += tau * online.tensors[k]


def save(params: QNetworkParams, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "feature_version": params.feature_version,
        "architecture": params.architecture,
        "emb_size": params.emb_size,
        "var_dim": params.var_dim,
        "cons_dim": params.cons_dim,
        "tensors": {
            name: {
                "shape": list(t.shape),
                "dtype": "<f8",
                "data": base64.b64encode(
                    np.ascontiguousarray(t, dtype="<f8").tobytes()).decode("ascii"),
            }
            for name, t in sorted(params.tensors.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load(path, expected_feature_version: str | None = FEATURE_VERSION) -> QNetworkParams:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    found = payload.get("feature_version")
    if expected_feature_version is not None and found != expected_feature_version:
        raise CheckpointError(
            f"checkpoint feature set {found!r} is incompatible with "
            f"encoder feature set {expected_feature_version!r}")
    tensors = {}
    for name, rec in payload["tensors"].items():
        raw = base64.b64decode(rec["data"])
        arr = np.frombuffer(raw, dtype=rec["dtype"]).reshape(rec["shape"]).copy()
        tensors[name] = arr
    params = QNetworkParams(
        tensors=tensors,
        emb_size=payload["emb_size"],
        var_dim=payload["var_dim"],
        cons_dim=payload["cons_dim"],
        feature_version=found,
        architecture=payload.get("architecture", ARCHITECTURE),
    )
    expected = set(_param_shapes(params.emb_size, params.var_dim, params.cons_dim))
    if set(tensors) != expected:
        missing = expected - set(tensors)
        raise CheckpointError(f"checkpoint {path} missing tensors: {sorted(missing)}")
    return params
