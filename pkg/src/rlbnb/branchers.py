"""Branching policies: strong branching, pseudocost, most-fractional, random,
and the adapter that runs the Q-network as a policy.

A policy returns one index from the candidate list. Policies that probe with
extra LPs report their pivots through ``probing_iterations`` so the engine can
account them separately from node LPs.
"""

from __future__ import annotations

import math

import numpy as np

from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, solve_lp, warm_hint

LARGE_GAIN = 1e10
SCORE_EPS = 1e-6


class PolicyError(RuntimeError):
    pass


class BranchingPolicy:
    name = "base"
    needs_state = False
    probing_iterations = 0

    def choose(self, tree, node, candidates, rng) -> int:
        raise NotImplementedError

    def observe_branching(self, tree, node, var, frac, down_lp, up_lp) -> None:
        pass

    def reset(self) -> None:
        pass


class RandomBranching(BranchingPolicy):
    name = "random"

    def choose(self, tree, node, candidates, rng):
        return int(candidates[rng.integers(len(candidates))])


class MostFractionalBranching(BranchingPolicy):
    name = "most_fractional"

    def choose(self, tree, node, candidates, rng):
        x = node.lp.x
        dist = [abs(x[j] - round(x[j])) for j in candidates]
        return int(candidates[int(np.argmax(dist))])


def _product_score(down_gain: float, up_gain: float) -> float:
    return max(down_gain, SCORE_EPS) * max(up_gain, SCORE_EPS)


class StrongBranching(BranchingPolicy):
    """One-step lookahead: solve both child LPs for every candidate.

    Probing results are discarded; only the dual-bound gains feed the product
    score. Probing LPs are warm-started from the node basis.
    """

    name = "strong_branching"

    def __init__(self, pivot_limit: int = 50_000):
        self.pivot_limit = pivot_limit
        self.probing_iterations = 0
        self.limit_warnings = 0

    def choose(self, tree, node, candidates, rng):
        inst = tree.instance
        lp = node.lp
        hint = warm_hint(lp)
        best_j = candidates[0]
        best_score = -math.inf
        for j in candidates:
            x_j = lp.x[j]
            gains = []
            for bounds in (
                node.local_bounds.tightened(j, upper=math.floor(x_j)),
                node.local_bounds.tightened(j, lower=math.ceil(x_j)),
            ):
                res = solve_lp(inst, bounds, self.pivot_limit, warm=hint)
                self.probing_iterations += res.iterations
                if res.status == INFEASIBLE:
                    gains.append(LARGE_GAIN)
                elif res.status == ITERATION_LIMIT:
                    gains.append(0.0)
                    self.limit_warnings += 1
                else:
                    gains.append(res.objective - lp.objective)
            score = _product_score(gains[0], gains[1])
            if score > best_score:
                best_score = score
                best_j = j
        return int(best_j)


class PseudocostBranching(BranchingPolicy):
    """Scores candidates by historical average per-unit dual-bound gains.

    Directions without observations fall back to the average pseudocost over
    initialised variables, or 1.0 before any observation exists.
    """

    name = "pseudocost"

    def __init__(self):
        self.sums = {}    # (var, direction) -> sum of unit gains
        self.counts = {}  # (var, direction) -> observation count

    def reset(self):
        self.sums.clear()
        self.counts.clear()

    def _mean(self, var, direction, fallback):
        count = self.counts.get((var, direction), 0)
        if count == 0:
            return fallback
        return self.sums[(var, direction)] / count

    def _fallback(self, direction):
        totals = [
            self.sums[key] / self.counts[key]
            for key in self.counts
            if key[1] == direction and self.counts[key] > 0
        ]
        return float(np.mean(totals)) if totals else 1.0

    def choose(self, tree, node, candidates, rng):
        x = node.lp.x
        fb_down = self._fallback("down")
        fb_up = self._fallback("up")
        best_j = candidates[0]
        best_score = -math.inf
        for j in candidates:
            frac = x[j] - math.floor(x[j])
            psi_down = self._mean(j, "down", fb_down)
            psi_up = self._mean(j, "up", fb_up)
            score = _product_score(psi_down * frac, psi_up * (1.0 - frac))
            if score > best_score:
                best_score = score
                best_j = j
        return int(best_j)

    def update(self, var, direction, unit_gain):
        key = (var, direction)
        self.sums[key] = self.sums.get(key, 0.0) + unit_gain
        self.counts[key] = self.counts.get(key, 0) + 1

    def observe_branching(self, tree, node, var, frac, down_lp, up_lp):
        node_obj = node.lp.objective
        if down_lp.status == OPTIMAL and frac > 1e-12:
            self.update(var, "down", (down_lp.objective - node_obj) / frac)
        if up_lp.status == OPTIMAL and (1.0 - frac) > 1e-12:
            self.update(var, "up", (up_lp.objective - node_obj) / (1.0 - frac))


class NeuralBranching(BranchingPolicy):
    """Q-network policy: greedy argmax or epsilon-stochastic softmax sampling."""

    name = "neural"
    needs_state = True

    def __init__(self, params, mode: str = "greedy", epsilon: float = 0.0,
                 temperature: float = 1.0):
        if mode not in ("greedy", "epsilon_stochastic"):
            raise ValueError(f"unknown mode {mode!r}")
        self.params = params
        self.mode = mode
        self.epsilon = epsilon
        self.temperature = temperature

    def q_values(self, state, candidates) -> np.ndarray:
        from .qnet import forward

        q, _ = forward(self.params, state)
        return q[list(candidates)]

    def choose(self, tree, node, candidates, rng):
        state = tree.states.get(node.id)
        if state is None:
            raise PolicyError(f"no state snapshot for node {node.id}")
        qc = np.asarray(self.q_values(state, candidates), dtype=float)
        if not np.isfinite(qc).all():
            raise PolicyError(f"non-finite Q-values at node {node.id}: {qc}")
        if self.mode == "greedy":
            return int(candidates[int(np.argmax(qc))])
        if rng.random() < self.epsilon:
            return int(candidates[rng.integers(len(candidates))])
        z = qc / self.temperature
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        return int(candidates[rng.choice(len(candidates), p=p)])


def make_policy(name: str, **kwargs) -> BranchingPolicy:
    table = {
        "random": RandomBranching,
        "most_fractional": MostFractionalBranching,
        "mf": MostFractionalBranching,
        "sb": StrongBranching,
        "strong_branching": StrongBranching,
        "pb": PseudocostBranching,
        "pseudocost": PseudocostBranching,
    }
    if name in table:
        return table[name]()
    if name == "neural":
        return NeuralBranching(**kwargs)
    raise ValueError(f"unknown branching policy {name!r}")
