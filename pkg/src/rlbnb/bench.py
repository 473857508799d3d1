"""Evaluation records, deterministic CSV output, and policy comparisons.

Wall-clock timings are kept out of the main CSV so identical runs are
byte-identical; they travel in the metadata sidecar instead.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .branchers import NeuralBranching, make_policy
from .engine import solve
from .milp import MilpInstance

CSV_FIELDS = (
    "instance", "seed", "brancher", "node_selector", "num_nodes",
    "num_lp_solves", "num_lp_iterations", "probing_iterations",
    "status", "objective",
)


@dataclass
class EvalRecord:
    instance: str
    seed: int
    brancher: str
    node_selector: str
    num_nodes: int
    num_lp_solves: int
    num_lp_iterations: int
    probing_iterations: int
    status: str
    objective: float
    wall_ms: float = 0.0

    def row(self) -> dict:
        return {
            "instance": self.instance,
            "seed": self.seed,
            "brancher": self.brancher,
            "node_selector": self.node_selector,
            "num_nodes": self.num_nodes,
            "num_lp_solves": self.num_lp_solves,
            "num_lp_iterations": self.num_lp_iterations,
            "probing_iterations": self.probing_iterations,
            "status": self.status,
            "objective": repr(self.objective),
        }


def _build_policy(policy: str, checkpoint=None, params=None):
    if policy == "neural":
        if params is None:
            from .qnet import load

            if checkpoint is None:
                raise ValueError("neural policy needs a checkpoint")
            params = load(checkpoint)
        return NeuralBranching(params, mode="greedy")
    return make_policy(policy)


def evaluate_instance(inst: MilpInstance, policy: str, selector: str,
                      seed: int = 0, max_nodes=None, max_seconds=3600.0,
                      checkpoint=None, params=None) -> EvalRecord:
    brancher = _build_policy(policy, checkpoint, params)
    t0 = time.perf_counter()
    stats, _ = solve(inst, brancher, selector=selector, seed=seed,
                     max_nodes=max_nodes, max_seconds=max_seconds)
    wall_ms = (time.perf_counter() - t0) * 1e3
    headline_iters = stats.num_lp_iterations - stats.probing_iterations
    return EvalRecord(
        instance=inst.name,
        seed=seed,
        brancher=policy,
        node_selector=selector,
        num_nodes=stats.num_nodes,
        num_lp_solves=stats.num_lp_solves,
        num_lp_iterations=headline_iters,
        probing_iterations=stats.probing_iterations,
        status=stats.status,
        objective=stats.primal_bound,
        wall_ms=wall_ms,
    )


def evaluate(instances, policy: str, selector: str, seed: int = 0,
             max_nodes=None, max_seconds=3600.0, checkpoint=None,
             params=None) -> list[EvalRecord]:
    """One record per instance; the per-instance seed is offset by its index."""
    records = []
    for i, inst in enumerate(instances):
        records.append(evaluate_instance(
            inst, policy, selector, seed=seed + i, max_nodes=max_nodes,
            max_seconds=max_seconds, checkpoint=checkpoint, params=params))
    return records


def summarise(records) -> dict:
    """Arithmetic and geometric means over completed instances."""
    done = [r for r in records if r.status == "optimal"]
    excluded = len(records) - len(done)
    if not done:
        return {"count": 0, "excluded": excluded}
    nodes = np.array([r.num_nodes for r in done], dtype=float)
    iters = np.array([r.num_lp_iterations for r in done], dtype=float)
    return {
        "count": len(done),
        "excluded": excluded,
        "mean_nodes": float(nodes.mean()),
        "geomean_nodes": float(np.exp(np.log1p(nodes).mean()) - 1.0),
        "mean_lp_iterations": float(iters.mean()),
        "geomean_lp_iterations": float(np.exp(np.log1p(iters).mean()) - 1.0),
    }


def to_csv(records) -> str:
    """Deterministic CSV: records plus trailing summary rows."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(CSV_FIELDS), lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec.row())
    summary = summarise(records)
    for key in sorted(summary):
        buf.write(f"# {key},{summary[key]}\n")
    return buf.getvalue()


def read_csv(path_or_text) -> list[EvalRecord]:
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    records = []
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        records.append(EvalRecord(
            instance=row["instance"],
            seed=int(row["seed"]),
            brancher=row["brancher"],
            node_selector=row["node_selector"],
            num_nodes=int(row["num_nodes"]),
            num_lp_solves=int(row["num_lp_solves"]),
            num_lp_iterations=int(row["num_lp_iterations"]),
            probing_iterations=int(row["probing_iterations"]),
            status=row["status"],
            objective=float(row["objective"]),
        ))
    return records


def _cdf_table(values, points=(5, 10, 25, 50, 75, 90, 95, 99, 100)) -> list[dict]:
    arr = np.sort(np.asarray(values, dtype=float))
    return [
        {"percentile": p, "episode_length": float(np.percentile(arr, p))}
        for p in points
    ]


def compare(baseline, candidate) -> dict:
    """Per-instance ratios, win/tie/loss rates, baseline-normalised means.

    Normalising against a pseudocost baseline reproduces the usual
    relative-performance view; comparing a run against itself yields
    a normalised mean of exactly 1.0.
    """
    base_by_id = {r.instance: r for r in baseline}
    cand_by_id = {r.instance: r for r in candidate}
    if set(base_by_id) != set(cand_by_id):
        only_base = sorted(set(base_by_id) - set(cand_by_id))
        only_cand = sorted(set(cand_by_id) - set(base_by_id))
        raise ValueError(
            f"instance sets differ; baseline-only={only_base}, candidate-only={only_cand}")
    ids = sorted(base_by_id)
    wins = ties = losses = 0
    ratios = []
    per_instance = []
    for iid in ids:
        b, c = base_by_id[iid], cand_by_id[iid]
        if b.num_nodes > 0:
            ratio = c.num_nodes / b.num_nodes
        else:
            ratio = 1.0 if c.num_nodes == 0 else math.inf
        ratios.append(ratio)
        if c.num_nodes < b.num_nodes:
            wins += 1
        elif c.num_nodes == b.num_nodes:
            ties += 1
        else:
            losses += 1
        per_instance.append({
            "instance": iid,
            "baseline_nodes": b.num_nodes,
            "candidate_nodes": c.num_nodes,
            "ratio": ratio,
        })
    total = len(ids)
    base_mean = float(np.mean([b.num_nodes for b in baseline]))
    cand_mean = float(np.mean([c.num_nodes for c in candidate]))
    finite = [r for r in ratios if math.isfinite(r)]
    return {
        "instances": total,
        "wins": wins,
        "ties": ties,
        "losses": losses,
        "win_rate": wins / total,
        "win_or_tie_rate": (wins + ties) / total,
        "mean_ratio": float(np.mean(finite)) if finite else math.inf,
        "baseline_mean_nodes": base_mean,
        "candidate_mean_nodes": cand_mean,
        "normalised_mean_nodes": cand_mean / base_mean if base_mean > 0 else math.inf,
        "baseline_cdf": _cdf_table([b.num_nodes for b in baseline]),
        "candidate_cdf": _cdf_table([c.num_nodes for c in candidate]),
        "per_instance": per_instance,
    }
