"""Branch-and-bound driver.

One solve iterates the four-stage loop: pick an open node, ask the branching
policy for a variable, solve the two child LPs (warm-started from the parent
basis), then fathom children that are infeasible, integral, or dominated by
the incumbent. Ties against the incumbent prune.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .features import TreeContext, extract
from .milp import MilpInstance, validate
from .simplex import (
    DEFAULT_PIVOT_LIMIT,
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    LocalBounds,
    solve_lp,
    warm_hint,
)

BOUND_EPS = 1e-9

# node statuses
OPEN = "open"
BRANCHED = "branched"
FATHOMED_INTEGRAL = "fathomed_integral"
FATHOMED_INFEASIBLE = "fathomed_infeasible"
FATHOMED_BOUND = "fathomed_bound"

FATHOMED = (FATHOMED_INTEGRAL, FATHOMED_INFEASIBLE, FATHOMED_BOUND)

SELECTORS = ("best_first", "dfs", "bfs")


class PolicyContractError(RuntimeError):
    """A branching policy returned a variable outside the candidate set."""


@dataclass
class TreeNode:
    id: int
    parent: int | None
    depth: int
    local_bounds: LocalBounds
    lp: object = None
    dual_bound: float = -math.inf
    status: str = OPEN
    children: tuple[int, int] | None = None
    branch_var: int | None = None
    visit_order: int | None = None
    fathomed_by_action: bool = False

    def is_leaf(self) -> bool:
        return self.children is None

    def record(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "depth": self.depth,
            "bounds": {str(k): list(v) for k, v in self.local_bounds.overrides.items()},
            "dual_bound": None if not math.isfinite(self.dual_bound) else self.dual_bound,
            "status": self.status,
            "children": list(self.children) if self.children else None,
            "branch_var": self.branch_var,
            "visit_order": self.visit_order,
        }


@dataclass
class SearchTree:
    instance: MilpInstance
    nodes: list[TreeNode] = field(default_factory=list)
    states: dict[int, object] = field(default_factory=dict)
    root_id: int = 0
    context: TreeContext | None = None

    def node(self, nid: int) -> TreeNode:
        return self.nodes[nid]

    def subtree_ids(self, root_id: int) -> list[int]:
        out = []
        stack = [root_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            node = self.nodes[nid]
            if node.children:
                stack.extend(reversed(node.children))
        return out

    def path(self, ancestor_id: int, descendant_id: int) -> list[int]:
        """Node ids from ancestor to descendant inclusive."""
        chain = [descendant_id]
        nid = descendant_id
        while nid != ancestor_id:
            parent = self.nodes[nid].parent
            if parent is None:
                raise ValueError(f"{ancestor_id} is not an ancestor of {descendant_id}")
            chain.append(parent)
            nid = parent
        return chain[::-1]

    def branched_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.status == BRANCHED]

    def fathomed_leaf_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_leaf() and n.status in FATHOMED]

    def dump_json(self) -> str:
        return json.dumps([n.record() for n in self.nodes], indent=2)


@dataclass
class SolveStats:
    num_nodes: int = 0
    num_lp_solves: int = 0
    num_lp_iterations: int = 0
    probing_iterations: int = 0
    primal_bound: float = math.inf
    dual_bound: float = -math.inf
    status: str = "optimal"
    infeasible: bool = False
    incumbent_x: np.ndarray | None = None


def candidates(node: TreeNode) -> list[int]:
    """Fractional integer variables at the node LP, ascending."""
    if node.lp is None or node.lp.status != OPTIMAL:
        raise ValueError(f"node {node.id} has no optimal LP")
    return list(node.lp.fractional_set)


def fathom_check(child: TreeNode, incumbent_value: float) -> str:
    """Classify a freshly solved child. Precedence: infeasible, integral, bound."""
    lp = child.lp
    if lp is None or lp.status == INFEASIBLE:
        return FATHOMED_INFEASIBLE
    if lp.status != OPTIMAL:
        return OPEN
    if not lp.fractional_set:
        return FATHOMED_INTEGRAL
    if lp.objective >= incumbent_value - BOUND_EPS:
        return FATHOMED_BOUND
    return OPEN


class _BestFirst:
    """Lowest dual bound first; ties go to the earlier-created node."""

    def __init__(self, tree):
        self.tree = tree
        self.heap = []

    def push(self, node):
        heapq.heappush(self.heap, (node.dual_bound, node.id))

    def push_children(self, down, up):
        self.push(down)
        self.push(up)

    def pop(self):
        while self.heap:
            _, nid = heapq.heappop(self.heap)
            if self.tree.nodes[nid].status == OPEN:
                return nid
        return None


class _Dfs:
    """LIFO with plunge-to-child preference; the down child is explored first."""

    def __init__(self, tree):
        self.tree = tree
        self.stack = []

    def push(self, node):
        self.stack.append(node.id)

    def push_children(self, down, up):
        self.stack.append(up.id)
        self.stack.append(down.id)

    def pop(self):
        while self.stack:
            nid = self.stack.pop()
            if self.tree.nodes[nid].status == OPEN:
                return nid
        return None


class _Bfs:
    """FIFO by creation order."""

    def __init__(self, tree):
        self.tree = tree
        self.queue = deque()

    def push(self, node):
        self.queue.append(node.id)

    def push_children(self, down, up):
        self.queue.append(down.id)
        self.queue.append(up.id)

    def pop(self):
        while self.queue:
            nid = self.queue.popleft()
            if self.tree.nodes[nid].status == OPEN:
                return nid
        return None


_SELECTOR_CLASSES = {"best_first": _BestFirst, "dfs": _Dfs, "bfs": _Bfs}


def make_selector(kind: str, tree: SearchTree):
    try:
        return _SELECTOR_CLASSES[kind](tree)
    except KeyError:
        raise ValueError(f"unknown node selector {kind!r}; expected one of {SELECTORS}")


def solve(
    inst: MilpInstance,
    brancher,
    selector: str = "best_first",
    *,
    max_nodes: int | None = None,
    max_seconds: float | None = 3600.0,
    pivot_limit: int = DEFAULT_PIVOT_LIMIT,
    seed: int = 0,
    observer=None,
    record_states: bool = False,
) -> tuple[SolveStats, SearchTree]:
    """Solve a MILP to optimality (or a limit) under the given policies."""
    bad = validate(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    if inst.num_integer < 1:
        raise ValueError("instance has no integer variables")

    rng = np.random.default_rng(seed)
    t_start = time.monotonic()
    stats = SolveStats()
    tree = SearchTree(instance=inst)
    ctx = TreeContext(num_vars=inst.num_vars)
    need_state = record_states or observer is not None or getattr(brancher, "needs_state", False)

    root = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())
    tree.nodes.append(root)
    ctx.created = 1
    root.lp = solve_lp(inst, root.local_bounds, pivot_limit)
    stats.num_lp_solves += 1
    stats.num_lp_iterations += root.lp.iterations
    ctx.lp_iterations += root.lp.iterations

    if root.lp.status == ITERATION_LIMIT:
        stats.status = "pivot_limit"
        return stats, tree
    if root.lp.status == INFEASIBLE:
        root.status = FATHOMED_INFEASIBLE
        root.fathomed_by_action = True
        ctx.infeasible_leaves += 1
        stats.infeasible = True
        stats.primal_bound = math.inf
        stats.dual_bound = math.inf
        return stats, tree

    root.dual_bound = root.lp.objective
    ctx.initial_dual = root.lp.objective
    ctx.root_x = root.lp.x.copy()

    if not root.lp.fractional_set:
        root.status = FATHOMED_INTEGRAL
        root.fathomed_by_action = True
        ctx.feasible_leaves += 1
        stats.primal_bound = stats.dual_bound = root.lp.objective
        stats.incumbent_x = root.lp.x.copy()
        return stats, tree

    sel = make_selector(selector, tree) if isinstance(selector, str) else selector
    sel.push(root)
    open_ids = {0}
    dual_heap = [(root.dual_bound, 0)]

    def global_dual() -> float:
        while dual_heap:
            d, nid = dual_heap[0]
            if tree.nodes[nid].status == OPEN:
                return d
            heapq.heappop(dual_heap)
        return stats.primal_bound

    while True:
        nid = sel.pop()
        if nid is None:
            break
        node = tree.nodes[nid]
        if max_nodes is not None and stats.num_nodes >= max_nodes:
            stats.status = "node_limit"
            break
        if max_seconds is not None and time.monotonic() - t_start > max_seconds:
            stats.status = "time_limit"
            break

        # focus
        node.visit_order = stats.num_nodes
        stats.num_nodes += 1
        ctx.begin_focus(global_dual(), stats.primal_bound)
        if need_state:
            state = extract(tree, node, ctx)
            tree.states[nid] = state
            if observer is not None:
                observer.on_focus(tree, node, state)

        cands = node.lp.fractional_set
        probe_before = getattr(brancher, "probing_iterations", 0)
        var = brancher.choose(tree, node, cands, rng)
        probe = getattr(brancher, "probing_iterations", 0) - probe_before
        stats.probing_iterations += probe
        stats.num_lp_iterations += probe
        if var not in cands:
            raise PolicyContractError(
                f"policy chose variable {var} outside candidates {cands} at node {nid}")

        x_var = node.lp.x[var]
        frac = x_var - math.floor(x_var)
        hint = warm_hint(node.lp)
        child_bounds = (
            node.local_bounds.tightened(var, upper=math.floor(x_var)),
            node.local_bounds.tightened(var, lower=math.ceil(x_var)),
        )
        child_results = []
        aborted = False
        for cb in child_bounds:
            res = solve_lp(inst, cb, pivot_limit, warm=hint)
            stats.num_lp_solves += 1
            stats.num_lp_iterations += res.iterations
            ctx.lp_iterations += res.iterations
            if res.status == ITERATION_LIMIT:
                stats.status = "pivot_limit"
                aborted = True
                break
            child_results.append(res)
        if aborted:
            # undo the half-finished focus so the tree stays consistent
            node.visit_order = None
            stats.num_nodes -= 1
            tree.states.pop(nid, None)
            break

        kids = []
        for cb, res in zip(child_bounds, child_results):
            child = TreeNode(
                id=len(tree.nodes),
                parent=nid,
                depth=node.depth + 1,
                local_bounds=cb,
                lp=res,
            )
            if res.status == OPTIMAL:
                child.dual_bound = max(res.objective, node.dual_bound)
            else:
                child.dual_bound = math.inf
            tree.nodes.append(child)
            kids.append(child)
        ctx.created += 2
        node.children = (kids[0].id, kids[1].id)
        node.branch_var = var
        node.status = BRANCHED
        ctx.branched += 1

        brancher.observe_branching(tree, node, var, frac, child_results[0], child_results[1])

        improved = False
        for child in kids:
            lp = child.lp
            if lp.status == OPTIMAL and not lp.fractional_set:
                if lp.objective < stats.primal_bound - BOUND_EPS:
                    stats.primal_bound = lp.objective
                    stats.incumbent_x = lp.x.copy()
                    ctx.incumbent_node = child.id
                    ctx.incumbent_x = lp.x.copy()
                    improved = True
        for child in kids:
            status = fathom_check(child, stats.primal_bound)
            child.status = status
            if status == OPEN:
                open_ids.add(child.id)
                heapq.heappush(dual_heap, (child.dual_bound, child.id))
            else:
                child.fathomed_by_action = True
                if status == FATHOMED_INTEGRAL:
                    ctx.feasible_leaves += 1
                elif status == FATHOMED_INFEASIBLE:
                    ctx.infeasible_leaves += 1
        if all(k.status == OPEN for k in kids):
            sel.push_children(kids[0], kids[1])
        else:
            for k in kids:
                if k.status == OPEN:
                    sel.push(k)
        open_ids.discard(nid)

        if improved:
            for oid in [o for o in open_ids]:
                other = tree.nodes[oid]
                if other.status == OPEN and other.dual_bound >= stats.primal_bound - BOUND_EPS:
                    other.status = FATHOMED_BOUND
                    open_ids.discard(oid)

        ctx.after_focus(cands)

    if stats.status == "optimal":
        if stats.incumbent_x is not None:
            stats.dual_bound = stats.primal_bound
        else:
            stats.infeasible = True
            stats.primal_bound = math.inf
            stats.dual_bound = math.inf
    else:
        stats.dual_bound = min(global_dual(), stats.primal_bound)
    ctx.cur_dual = stats.dual_bound
    ctx.cur_primal = stats.primal_bound
    tree.context = ctx
    return stats, tree
