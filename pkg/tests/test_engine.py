import math

import numpy as np
import pytest

from rlbnb.branchers import (
    BranchingPolicy,
    MostFractionalBranching,
    PseudocostBranching,
    RandomBranching,
    StrongBranching,
)
from rlbnb.engine import (
    BRANCHED,
    FATHOMED_BOUND,
    FATHOMED_INFEASIBLE,
    FATHOMED_INTEGRAL,
    OPEN,
    PolicyContractError,
    SolveStats,
    TreeNode,
    candidates,
    fathom_check,
    solve,
)
from rlbnb.milp import MilpInstance, Row
from rlbnb.simplex import LocalBounds, solve_lp
from oracle import enumerate_milp


def make_instance(c, rows, lb, ub, is_integer=None, name="milp"):
    n = len(c)
    if is_integer is None:
        is_integer = [True] * n
    return MilpInstance(
        name=name,
        num_vars=n,
        num_cons=len(rows),
        objective=np.asarray(c, dtype=float),
        rows=rows,
        lb=np.asarray(lb, dtype=float),
        ub=np.asarray(ub, dtype=float),
        is_integer=np.asarray(is_integer, dtype=bool),
    )


def worked_example():
    return make_instance(
        [-1.0, -2.0],
        [Row([(0, 1.0), (1, 1.0)], 1.5, "<=")],
        [0, 0],
        [1, 1],
    )


def random_binary_milp(rng, max_vars=12):
    n = int(rng.integers(3, max_vars + 1))
    m = int(rng.integers(2, 7))
    rows = []
    for _ in range(m):
        nnz = int(rng.integers(2, min(n, 5) + 1))
        idx = sorted(rng.choice(n, size=nnz, replace=False))
        coefs = [(int(j), float(rng.integers(1, 6)) * (1 if rng.random() < 0.7 else -1))
                 for j in idx]
        sense = "<=" if rng.random() < 0.8 else ">="
        rhs = float(rng.integers(0, 8))
        rows.append(Row(coefs=coefs, rhs=rhs, sense=sense))
    c = rng.integers(-10, 11, size=n).astype(float)
    return make_instance(c, rows, np.zeros(n), np.ones(n))


def test_worked_example_exact_trace():
    inst = worked_example()
    stats, tree = solve(inst, MostFractionalBranching())
    assert stats.status == "optimal"
    assert stats.primal_bound == pytest.approx(-2.0, abs=1e-9)
    assert np.allclose(stats.incumbent_x, [0.0, 1.0])
    assert stats.num_nodes == 1
    assert stats.num_lp_solves == 3
    root = tree.nodes[0]
    assert root.status == BRANCHED and root.branch_var == 0
    assert root.lp.objective == pytest.approx(-2.5, abs=1e-9)
    down, up = (tree.nodes[i] for i in root.children)
    assert down.status == FATHOMED_INTEGRAL
    assert up.status == FATHOMED_BOUND  # tie with the incumbent prunes


def test_integral_root_no_branching():
    inst = make_instance([-1.0], [Row([(0, 1.0)], 1.0, "<=")], [0], [1])
    stats, tree = solve(inst, RandomBranching())
    assert stats.status == "optimal"
    assert stats.num_nodes == 0
    assert stats.primal_bound == pytest.approx(-1.0)
    assert tree.nodes[0].status == FATHOMED_INTEGRAL


def test_infeasible_root():
    inst = make_instance(
        [1.0],
        [Row([(0, 1.0)], 2.0, ">="), Row([(0, 1.0)], 0.0, "<=")],
        [0],
        [1],
    )
    stats, tree = solve(inst, RandomBranching())
    assert stats.status == "optimal"
    assert stats.infeasible
    assert stats.primal_bound == math.inf


def test_candidates_matches_fractional_set():
    inst = worked_example()
    node = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())
    node.lp = solve_lp(inst)
    assert candidates(node) == [0]
    with pytest.raises(ValueError):
        candidates(TreeNode(id=1, parent=None, depth=0, local_bounds=LocalBounds()))


def test_candidates_integral_and_symmetric_cases():
    integral = make_instance([-1.0], [Row([(0, 1.0)], 1.0, "<=")], [0], [1])
    node = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())
    node.lp = solve_lp(integral)
    assert candidates(node) == []
    # x = (0.5, 0.5): both variables fractional, ascending order
    half = make_instance(
        [-1.0, -1.0],
        [Row([(0, 1.0), (1, 1.0)], 1.0, "="),
         Row([(0, 1.0), (1, -1.0)], 0.0, "=")],
        [0, 0], [1, 1],
    )
    node.lp = solve_lp(half)
    assert np.allclose(node.lp.x, [0.5, 0.5])
    assert candidates(node) == [0, 1]


def test_fathom_check_precedence():
    inst = worked_example()
    node = TreeNode(id=0, parent=None, depth=0, local_bounds=LocalBounds())
    node.lp = solve_lp(inst, LocalBounds({0: (1.0, 0.0)}))
    assert fathom_check(node, math.inf) == FATHOMED_INFEASIBLE
    node.lp = solve_lp(inst, LocalBounds({0: (0.0, 0.0)}))  # integral child at -2
    assert fathom_check(node, -1.0) == FATHOMED_INTEGRAL
    node.lp = solve_lp(inst)  # fractional at -2.5
    assert fathom_check(node, -2.5) == FATHOMED_BOUND  # equal bound prunes
    assert fathom_check(node, -2.0) == OPEN  # child can still improve on -2.0


@pytest.mark.parametrize("selector", ["best_first", "dfs", "bfs"])
@pytest.mark.parametrize("policy_cls", [StrongBranching, PseudocostBranching,
                                        RandomBranching, MostFractionalBranching])
def test_oracle_small_sweep(selector, policy_cls):
    rng = np.random.default_rng(17)
    for _ in range(12):
        inst = random_binary_milp(rng, max_vars=8)
        want, _ = enumerate_milp(inst)
        stats, _ = solve(inst, policy_cls(), selector=selector, seed=1)
        assert stats.status == "optimal"
        if math.isinf(want):
            assert stats.infeasible
        else:
            assert stats.primal_bound == pytest.approx(want, abs=1e-6)


def test_policy_independence_of_optimum():
    rng = np.random.default_rng(23)
    inst = random_binary_milp(rng, max_vars=10)
    want, _ = enumerate_milp(inst)
    values = []
    for policy in (StrongBranching(), PseudocostBranching(), RandomBranching(),
                   MostFractionalBranching()):
        stats, _ = solve(inst, policy, seed=3)
        if not stats.infeasible:
            values.append(stats.primal_bound)
    if not math.isinf(want):
        assert all(v == pytest.approx(want, abs=1e-6) for v in values)


def test_dual_bound_monotone_along_paths():
    rng = np.random.default_rng(5)
    inst = random_binary_milp(rng, max_vars=10)
    stats, tree = solve(inst, RandomBranching(), seed=11)
    for node in tree.nodes:
        if node.parent is None or not math.isfinite(node.dual_bound):
            continue
        parent = tree.nodes[node.parent]
        if math.isfinite(parent.dual_bound):
            assert node.dual_bound >= parent.dual_bound - 1e-9


def test_visit_order_iff_focused():
    rng = np.random.default_rng(29)
    inst = random_binary_milp(rng)
    stats, tree = solve(inst, RandomBranching(), seed=2)
    focused = [n for n in tree.nodes if n.visit_order is not None]
    assert len(focused) == stats.num_nodes
    assert all(n.status == BRANCHED for n in focused)
    orders = sorted(n.visit_order for n in focused)
    assert orders == list(range(stats.num_nodes))


def test_policy_contract_violation():
    class Bad(BranchingPolicy):
        def choose(self, tree, node, candidates, rng):
            return -1

    with pytest.raises(PolicyContractError):
        solve(worked_example(), Bad())


def test_node_limit_returns_partial_tree():
    rng = np.random.default_rng(41)
    inst = random_binary_milp(rng, max_vars=12)
    stats, tree = solve(inst, RandomBranching(), max_nodes=1, seed=0)
    assert stats.status in ("node_limit", "optimal")
    if stats.status == "node_limit":
        assert stats.num_nodes == 1
        assert any(n.status == OPEN for n in tree.nodes)


def test_observer_receives_focus_events():
    events = []

    class Recorder:
        def on_focus(self, tree, node, state):
            events.append((node.id, state.focus_node_id))

    inst = worked_example()
    stats, tree = solve(inst, MostFractionalBranching(), observer=Recorder())
    assert events == [(0, 0)]
    assert 0 in tree.states  # snapshots stored alongside the observer calls


def test_lp_iteration_accounting_is_additive():
    rng = np.random.default_rng(3)
    inst = random_binary_milp(rng, max_vars=10)
    stats, tree = solve(inst, RandomBranching(), seed=9)
    from_nodes = sum(n.lp.iterations for n in tree.nodes if n.lp is not None)
    assert stats.num_lp_iterations - stats.probing_iterations == from_nodes
    assert stats.num_lp_solves == sum(1 for n in tree.nodes if n.lp is not None)


def test_tree_dump_json():
    stats, tree = solve(worked_example(), MostFractionalBranching())
    import json

    records = json.loads(tree.dump_json())
    assert len(records) == 3
    assert records[0]["status"] == "branched"
    assert records[0]["visit_order"] == 0
