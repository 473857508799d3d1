"""Retrospective trajectory construction over a solved search tree.

After a solve, the branched nodes are partitioned into root-to-leaf paths:
repeatedly root a trajectory at the shallowest branched node not yet assigned,
pick a fathomed destination leaf in its sub-tree with a construction
heuristic, and take the unassigned branched nodes along that path. Rewards are
-1 per step; the terminal step earns 0 when its branching fathomed both
children. Open leaves (from limit-terminated solves) are never destinations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import BRANCHED, FATHOMED, FATHOMED_INFEASIBLE, SearchTree

HEURISTICS = ("mlpg", "random", "visitation_order", "deepest")
LARGE_GAIN = 1e10

# terminal-reward rules: "both_children" gives 0 only when the final branching
# fathomed both its children; "destination_only" gives 0 whenever the chosen
# destination leaf was fathomed by that branching.
TERMINAL_RULES = ("both_children", "destination_only")


class RetroError(RuntimeError):
    pass


@dataclass
class RetroTrajectory:
    node_ids: list[int]
    destination_leaf: int
    rewards: list[float]
    dones: list[bool]

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def undiscounted_return(self) -> float:
        return float(sum(self.rewards))


@dataclass
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    done: bool


def _eligible_leaves(tree: SearchTree, root_id: int, selected: set[int]) -> list[int]:
    out = []
    for nid in tree.subtree_ids(root_id):
        node = tree.nodes[nid]
        if node.is_leaf() and node.status in FATHOMED and nid not in selected:
            out.append(nid)
    return out


def select_leaf(tree: SearchTree, subtree_root: int, heuristic: str,
                rng=None, *, selected=(), assigned=()) -> int:
    """Pick the destination leaf in the sub-tree rooted at ``subtree_root``."""
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown construction heuristic {heuristic!r}")
    leaves = _eligible_leaves(tree, subtree_root, set(selected))
    if not leaves:
        raise RetroError(f"no eligible fathomed leaf under node {subtree_root}")
    leaves.sort()

    if heuristic == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        return int(leaves[rng.integers(len(leaves))])

    if heuristic == "mlpg":
        root_db = tree.nodes[subtree_root].dual_bound

        def gain(nid):
            leaf = tree.nodes[nid]
            if leaf.status == FATHOMED_INFEASIBLE or not math.isfinite(leaf.dual_bound):
                return LARGE_GAIN
            return abs(root_db - leaf.dual_bound)

        best = max(leaves, key=lambda nid: (gain(nid), -nid))
        return int(best)

    if heuristic == "visitation_order":
        def creation_key(nid):
            parent = tree.nodes[nid].parent
            order = tree.nodes[parent].visit_order if parent is not None else -1
            return (order if order is not None else math.inf, nid)

        return int(min(leaves, key=creation_key))

    # deepest: maximise the number of still-unassigned branched nodes on the path
    assigned = set(assigned)

    def depth_through_unassigned(nid):
        count = 0
        for pid in tree.path(subtree_root, nid)[:-1]:
            node = tree.nodes[pid]
            if node.status == BRANCHED and pid not in assigned:
                count += 1
        return count

    best = max(leaves, key=lambda nid: (depth_through_unassigned(nid), -nid))
    return int(best)


def construct_trajectories(tree: SearchTree, heuristic: str, rng=None, *,
                           terminal_rule: str = "both_children",
                           dropped: list | None = None) -> list[RetroTrajectory]:
    """Partition the branched nodes of a solved tree into retro trajectories."""
    if terminal_rule not in TERMINAL_RULES:
        raise ValueError(f"unknown terminal rule {terminal_rule!r}")
    unassigned = {n.id for n in tree.nodes if n.status == BRANCHED}
    assigned: set[int] = set()
    selected: set[int] = set()
    trajectories: list[RetroTrajectory] = []

    while unassigned:
        root_id = min(unassigned, key=lambda nid: (tree.nodes[nid].depth, nid))
        leaves = _eligible_leaves(tree, root_id, selected)
        if not leaves:
            # limit-terminated trees can strand branched nodes without a
            # fathomed destination; they are dropped from training
            unassigned.discard(root_id)
            if dropped is not None:
                dropped.append(root_id)
            continue
        leaf = select_leaf(tree, root_id, heuristic, rng,
                           selected=selected, assigned=assigned)
        path = [
            nid for nid in tree.path(root_id, leaf)
            if tree.nodes[nid].status == BRANCHED and nid in unassigned
        ]
        last = tree.nodes[path[-1]]
        rewards = [-1.0] * len(path)
        if terminal_rule == "both_children":
            kids = [tree.nodes[cid] for cid in last.children]
            if all(k.fathomed_by_action for k in kids):
                rewards[-1] = 0.0
        else:
            if tree.nodes[leaf].fathomed_by_action and tree.nodes[leaf].parent == last.id:
                rewards[-1] = 0.0
        dones = [False] * len(path)
        dones[-1] = True
        trajectories.append(RetroTrajectory(path, int(leaf), rewards, dones))
        unassigned -= set(path)
        assigned |= set(path)
        selected.add(leaf)
    return trajectories


def full_episode(tree: SearchTree, completed: bool = True) -> RetroTrajectory:
    """The original visit-ordered episode as a single trajectory."""
    focused = sorted(
        (n for n in tree.nodes if n.visit_order is not None),
        key=lambda n: n.visit_order,
    )
    ids = [n.id for n in focused]
    if not ids:
        return RetroTrajectory([], -1, [], [])
    rewards = [-1.0] * len(ids)
    if completed:
        rewards[-1] = 0.0
    dones = [False] * len(ids)
    dones[-1] = True
    return RetroTrajectory(ids, -1, rewards, dones)


def transitions_to_jsonl(instance_name: str, trajectories: list[RetroTrajectory],
                         tree: SearchTree) -> str:
    """Debug dump: one JSON line per transition across the given trajectories."""
    import json

    lines = []
    for traj_index, traj in enumerate(trajectories):
        for step, nid in enumerate(traj.node_ids):
            lines.append(json.dumps({
                "instance": instance_name,
                "trajectory": traj_index,
                "step": step,
                "node": nid,
                "action": tree.nodes[nid].branch_var,
                "reward": traj.rewards[step],
                "done": traj.dones[step],
            }))
    return "\n".join(lines)


def emit_transitions(trajectory: RetroTrajectory, tree: SearchTree) -> list[Transition]:
    """Expand a trajectory into (s, u, r, s', done) records from stored snapshots."""
    out = []
    steps = len(trajectory.node_ids)
    for i, nid in enumerate(trajectory.node_ids):
        state = tree.states.get(nid)
        if state is None:
            raise RetroError(
                f"no state snapshot for node {nid}; solve with record_states=True")
        node = tree.nodes[nid]
        done = trajectory.dones[i]
        next_state = None
        if not done and i + 1 < steps:
            next_state = tree.states.get(trajectory.node_ids[i + 1])
            if next_state is None:
                raise RetroError(f"no state snapshot for node {trajectory.node_ids[i + 1]}")
        out.append(Transition(
            state=state,
            action=int(node.branch_var),
            reward=trajectory.rewards[i],
            next_state=next_state,
            done=done,
        ))
    return out
