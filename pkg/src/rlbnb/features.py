"""Bipartite-graph observation of a focus node.

Each observation couples per-variable features (19 node-local columns plus 20
tree-level columns broadcast to every variable row), per-constraint features,
and the coefficient edges. The column layout is frozen under FEATURE_VERSION
so checkpoints and encoders stay paired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import AT_LOWER, AT_UPPER, BASIC, FEAS_TOL

FEATURE_VERSION = "bipartite-v1"
NUM_VAR_FEATURES = 39
NUM_BASE_FEATURES = 19
NUM_TREE_FEATURES = 20
NUM_CONS_FEATURES = 5

_EPS = 1e-12


def _guard(den: float) -> float:
    return den if abs(den) > _EPS else _EPS


@dataclass
class BipartiteState:
    """Feature tensors for one focus node."""

    var_features: np.ndarray       # (n, 39)
    cons_features: np.ndarray      # (m, 5)
    edge_index: np.ndarray         # (2, nnz): row 0 = constraint, row 1 = variable
    edge_features: np.ndarray      # (nnz,)
    candidate_mask: np.ndarray     # (n,) bool
    focus_node_id: int

    @property
    def num_vars(self) -> int:
        return self.var_features.shape[0]

    @property
    def num_cons(self) -> int:
        return self.cons_features.shape[0]

    def candidates(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.candidate_mask)]

    def dump_json(self) -> str:
        """Debug dump of the feature matrices and mask."""
        import json

        return json.dumps({
            "focus_node_id": self.focus_node_id,
            "feature_version": FEATURE_VERSION,
            "var_features": self.var_features.tolist(),
            "cons_features": self.cons_features.tolist(),
            "edge_index": self.edge_index.tolist(),
            "edge_features": self.edge_features.tolist(),
            "candidate_mask": self.candidate_mask.astype(int).tolist(),
        })


@dataclass
class TreeContext:
    """Running solve statistics read by the tree-level features.

    "Previous" bound values refer to the preceding focus event; the engine
    rolls them forward via ``after_focus`` once per focused node.
    """

    num_vars: int
    initial_dual: float = 0.0
    initial_primal: float = math.inf
    cur_dual: float = 0.0
    cur_primal: float = math.inf
    prev_dual: float | None = None
    prev_primal: float | None = None
    incumbent_node: int = -1
    incumbent_x: np.ndarray | None = None
    root_x: np.ndarray | None = None
    created: int = 0
    branched: int = 0
    feasible_leaves: int = 0
    infeasible_leaves: int = 0
    lp_iterations: int = 0
    focus_count: int = 0
    max_db_frac_change: float = 0.0
    max_pb_frac_change: float = 0.0
    var_age: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.var_age is None:
            self.var_age = np.zeros(self.num_vars)

    @property
    def num_leaves(self) -> int:
        return self.created - self.branched

    def begin_focus(self, global_dual: float, global_primal: float) -> None:
        self.cur_dual = global_dual
        self.cur_primal = global_primal
        if self.prev_dual is None:
            self.prev_dual = global_dual
        if self.prev_primal is None:
            self.prev_primal = global_primal

    def db_frac_change(self) -> float:
        prev = self.prev_dual if self.prev_dual is not None else self.cur_dual
        return abs(self.cur_dual - prev) / abs(_guard(prev))

    def pb_frac_change(self) -> float:
        prev = self.prev_primal if self.prev_primal is not None else self.cur_primal
        if not (math.isfinite(self.cur_primal) and math.isfinite(prev)):
            return 0.0
        return abs(self.cur_primal - prev) / abs(_guard(prev))

    def after_focus(self, candidates) -> None:
        self.max_db_frac_change = max(self.max_db_frac_change, self.db_frac_change())
        self.max_pb_frac_change = max(self.max_pb_frac_change, self.pb_frac_change())
        self.var_age[list(candidates)] += 1.0
        self.focus_count += 1
        self.prev_dual = self.cur_dual
        self.prev_primal = self.cur_primal


def extract(tree, node, ctx: TreeContext) -> BipartiteState:
    """Build the observation for a focus node with an optimal LP."""
    lp = node.lp
    if lp is None or lp.status != "optimal":
        raise ValueError(f"node {node.id} has no optimal LP to extract features from")
    inst = tree.instance
    n, m = inst.num_vars, inst.num_cons
    lo, hi = node.local_bounds.apply(inst.lb, inst.ub)
    x = lp.x
    c = inst.objective
    c_norm = _guard(float(np.linalg.norm(c)))
    candidates = lp.fractional_set
    cand_mask = np.zeros(n, dtype=bool)
    cand_mask[candidates] = True

    vf = np.zeros((n, NUM_VAR_FEATURES))
    vf[:, 0] = c / c_norm
    vf[:, 1] = x
    vf[:, 2] = np.abs(x - np.round(x))
    vf[:, 3] = np.isfinite(lo) & (x <= lo + FEAS_TOL)
    vf[:, 4] = np.isfinite(hi) & (x >= hi - FEAS_TOL)
    vstat = lp.col_status[:n]
    vf[:, 5] = vstat == BASIC
    vf[:, 6] = vstat == AT_LOWER
    vf[:, 7] = vstat == AT_UPPER
    vf[:, 8] = (vstat != BASIC) & (vstat != AT_LOWER) & (vstat != AT_UPPER)
    vf[:, 9] = lp.reduced_costs / c_norm
    vf[:, 10] = np.isfinite(lo)
    vf[:, 11] = np.isfinite(hi)
    if ctx.incumbent_x is not None:
        vf[:, 12] = ctx.incumbent_x
        vf[:, 13] = 1.0
    vf[:, 14] = cand_mask
    if ctx.root_x is not None:
        vf[:, 15] = ctx.root_x
    vf[:, 16] = ctx.var_age / (ctx.focus_count + 1.0)
    # columns 17, 18: pseudo-gain slots, reserved

    vf[:, NUM_BASE_FEATURES:] = _tree_features(tree, node, ctx)[None, :]

    cons, edge_index, edge_feat = _constraint_features(inst, lp)
    return BipartiteState(
        var_features=vf,
        cons_features=cons,
        edge_index=edge_index,
        edge_features=edge_feat,
        candidate_mask=cand_mask,
        focus_node_id=node.id,
    )


def _tree_features(tree, node, ctx: TreeContext) -> np.ndarray:
    f = np.zeros(NUM_TREE_FEATURES)
    f[0] = ctx.db_frac_change()
    f[1] = ctx.pb_frac_change()
    f[2] = max(ctx.max_db_frac_change, f[0])
    f[3] = max(ctx.max_pb_frac_change, f[1])
    if math.isfinite(ctx.cur_primal):
        f[4] = abs(ctx.cur_primal - ctx.cur_dual) / _guard(
            max(abs(ctx.cur_primal), abs(ctx.cur_dual)))
    else:
        f[4] = 1.0
    created = max(ctx.created, 1)
    f[5] = ctx.num_leaves / created
    f[6] = ctx.feasible_leaves / created
    f[7] = ctx.infeasible_leaves / created
    f[8] = ctx.created / _guard(float(ctx.lp_iterations))
    sibling = _best_sibling(tree, node)
    num_sib = 0
    if node.parent is not None:
        parent = tree.nodes[node.parent]
        num_sib = len([cid for cid in parent.children if cid != node.id])
    f[9] = num_sib / created
    f[10] = 1.0 if node.id == ctx.incumbent_node else 0.0
    f[11] = 1.0 if node.parent is not None and node.parent == ctx.incumbent_node else 0.0
    f[12] = node.depth
    f[13] = ctx.initial_dual / _guard(node.dual_bound)
    f[14] = ctx.cur_dual / _guard(node.dual_bound)
    if sibling is None:
        f[15] = 1.0
    else:
        f[16] = 1.0 if sibling.id == ctx.incumbent_node else 0.0
        f[17] = ctx.initial_dual / _guard(sibling.dual_bound)
        f[18] = ctx.cur_dual / _guard(sibling.dual_bound)
        f[19] = sibling.dual_bound / _guard(node.dual_bound)
    return f


def _best_sibling(tree, node):
    """The sibling with an optimal LP, or None when there is no such node."""
    if node.parent is None:
        return None
    parent = tree.nodes[node.parent]
    if parent.children is None:
        return None
    best = None
    for cid in parent.children:
        if cid == node.id:
            continue
        sib = tree.nodes[cid]
        if sib.lp is not None and sib.lp.status == "optimal":
            if best is None or sib.dual_bound < best.dual_bound:
                best = sib
    return best


def _constraint_features(inst, lp):
    a = inst.dense_matrix()
    m = inst.num_cons
    c = inst.objective
    c_norm = _guard(float(np.linalg.norm(c)))
    row_norms = np.maximum(np.linalg.norm(a, axis=1), _EPS)
    cons = np.zeros((m, NUM_CONS_FEATURES))
    cons[:, 0] = (a @ c) / (row_norms * c_norm)
    rhs = np.array([row.rhs for row in inst.rows])
    cons[:, 1] = rhs / row_norms
    activity = a @ lp.x
    cons[:, 2] = np.abs(activity - rhs) <= FEAS_TOL
    if lp.duals is not None:
        cons[:, 3] = lp.duals / c_norm
    # column 4: constraint age; rows are static in this solver

    rows_idx = []
    cols_idx = []
    vals = []
    for i, row in enumerate(inst.rows):
        for j, coef in row.coefs:
            rows_idx.append(i)
            cols_idx.append(j)
            vals.append(coef / row_norms[i])
    edge_index = np.array([rows_idx, cols_idx], dtype=np.int64).reshape(2, -1)
    edge_feat = np.asarray(vals, dtype=float)
    return cons, edge_index, edge_feat
