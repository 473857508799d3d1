"""Seeded generators for four NP-hard benchmark families.

All families are emitted in minimisation form; maximisation objectives
(auction value, independent-set size) are negated at generation time.
Every generator admits a reference assignment that is feasible by
construction (see ``reference_assignment``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import MilpInstance, Row, SENSE_EQ, SENSE_GE, SENSE_LE

PROBLEM_CLASSES = (
    "set_covering",
    "combinatorial_auction",
    "capacitated_facility_location",
    "maximum_independent_set",
)


class GenerationError(ValueError):
    pass


@dataclass
class GeneratorSpec:
    """Parameters for one benchmark family. Unused size fields are ignored."""

    problem_class: str
    rows: int = 100             # set covering
    cols: int = 200
    density: float = 0.05
    cost_low: int = 1           # set covering objective range
    cost_high: int = 100
    items: int = 10             # combinatorial auction
    bids: int = 50
    customers: int = 5          # capacitated facility location
    facilities: int = 5
    graph_nodes: int = 25       # maximum independent set
    affinity: int = 4
    seed: int = 0

    def validate(self) -> list[str]:
        bad = []
        if self.problem_class not in PROBLEM_CLASSES:
            bad.append(f"problem_class: {self.problem_class!r} not one of {PROBLEM_CLASSES}")
        for name in ("rows", "cols", "items", "bids", "customers", "facilities",
                     "graph_nodes", "affinity"):
            if getattr(self, name) < 1:
                bad.append(f"{name}: must be >= 1")
        if not 0.0 < self.density <= 1.0:
            bad.append(f"density: {self.density} outside (0, 1]")
        if not 1 <= self.cost_low <= self.cost_high:
            bad.append(f"cost range [{self.cost_low}, {self.cost_high}] invalid")
        if self.seed < 0:
            bad.append("seed: must be non-negative")
        return bad

    def replace(self, **kw) -> "GeneratorSpec":
        merged = {**self.__dict__, **kw}
        return GeneratorSpec(**merged)

    def params(self) -> dict:
        """Per-class parameter dict, reported in output metadata."""
        base = {"problem_class": self.problem_class, "seed": self.seed}
        if self.problem_class == "set_covering":
            base.update(rows=self.rows, cols=self.cols, density=self.density,
                        cost_low=self.cost_low, cost_high=self.cost_high)
        elif self.problem_class == "combinatorial_auction":
            base.update(items=self.items, bids=self.bids)
        elif self.problem_class == "capacitated_facility_location":
            base.update(customers=self.customers, facilities=self.facilities)
        else:
            base.update(graph_nodes=self.graph_nodes, affinity=self.affinity)
        return base


def generate(spec: GeneratorSpec) -> MilpInstance:
    """Build one instance; deterministic for a fixed spec (seed included)."""
    bad = spec.validate()
    if bad:
        raise GenerationError("; ".join(bad))
    rng = np.random.default_rng(spec.seed)
    if spec.problem_class == "set_covering":
        return _set_covering(spec.rows, spec.cols, spec.density,
                             spec.cost_low, spec.cost_high, rng, spec.seed)
    if spec.problem_class == "combinatorial_auction":
        return _combinatorial_auction(spec.items, spec.bids, rng, spec.seed)
    if spec.problem_class == "capacitated_facility_location":
        return _facility_location(spec.customers, spec.facilities, rng, spec.seed)
    return _max_independent_set(spec.graph_nodes, spec.affinity, rng, spec.seed)


def reference_assignment(spec: GeneratorSpec, inst: MilpInstance) -> np.ndarray:
    """A feasible-by-construction assignment for the generated instance."""
    if spec.problem_class == "set_covering":
        return np.ones(inst.num_vars)
    if spec.problem_class == "capacitated_facility_location":
        nf = spec.facilities
        # capacity rows are sorted by index, so the open-variable term comes first
        caps = np.array([-row.coefs[0][1] for row in inst.rows[spec.customers:]])
        x = np.zeros(inst.num_vars)
        x[:nf] = 1.0
        share = caps / caps.sum()
        for c in range(spec.customers):
            x[nf + c * nf: nf + (c + 1) * nf] = share
        return x
    return np.zeros(inst.num_vars)


def _set_covering(m: int, n: int, density: float, cost_low: int, cost_high: int,
                  rng, seed: int) -> MilpInstance:
    """Random covering matrix: each column covers >=1 row, each row covered >=2 times."""
    if n < 2:
        raise GenerationError("set_covering needs cols >= 2 so each row can be covered twice")
    cover = [set() for _ in range(m)]
    for j in range(n):
        k = max(1, int(rng.binomial(m, density)))
        for i in rng.choice(m, size=min(k, m), replace=False):
            cover[int(i)].add(j)
    for i in range(m):
        while len(cover[i]) < 2:
            cover[i].add(int(rng.integers(n)))
    costs = rng.integers(cost_low, cost_high + 1, size=n).astype(float)
    rows = [
        Row(coefs=[(j, 1.0) for j in sorted(cover[i])], rhs=1.0, sense=SENSE_GE)
        for i in range(m)
    ]
    return MilpInstance(
        name=f"setcov_{m}x{n}_s{seed}",
        num_vars=n,
        num_cons=m,
        objective=costs,
        rows=rows,
        lb=np.zeros(n),
        ub=np.ones(n),
        is_integer=np.ones(n, dtype=bool),
    )


def _combinatorial_auction(items: int, bids: int, rng, seed: int) -> MilpInstance:
    """Winner determination: one binary per bid, one <=1 row per item, value negated."""
    bundles = []
    values = []
    for _ in range(bids):
        size = min(items, int(rng.geometric(0.5)))  # geometric draws are >= 1
        bundle = sorted(int(i) for i in rng.choice(items, size=size, replace=False))
        bundles.append(set(bundle))
        values.append(float(round(size * rng.uniform(10.0, 20.0) + rng.uniform(0.0, 5.0))))
    for i in range(items):
        if not any(i in b for b in bundles):
            b = int(rng.integers(bids))
            bundles[b].add(i)
            values[b] += float(round(rng.uniform(10.0, 20.0)))
    rows = []
    for i in range(items):
        members = [(j, 1.0) for j in range(bids) if i in bundles[j]]
        rows.append(Row(coefs=members, rhs=1.0, sense=SENSE_LE))
    return MilpInstance(
        name=f"cauction_{items}i_{bids}b_s{seed}",
        num_vars=bids,
        num_cons=items,
        objective=-np.asarray(values),
        rows=rows,
        lb=np.zeros(bids),
        ub=np.ones(bids),
        is_integer=np.ones(bids, dtype=bool),
    )


def _facility_location(nc: int, nf: int, rng, seed: int) -> MilpInstance:
    """Open/assign formulation: binary open vars, continuous assignment fractions.

    Variable order: y_0..y_{nf-1}, then x_{c,f} at index nf + c*nf + f.
    Capacities are scaled so total capacity >= 1.5x total demand, which keeps
    the proportional all-open assignment feasible.
    """
    demand = rng.integers(5, 36, size=nc).astype(float)
    caps = rng.integers(10, 161, size=nf).astype(float)
    scale = 1.5 * demand.sum() / caps.sum()
    if scale > 1.0:
        caps = np.ceil(caps * scale)
    fixed = rng.integers(100, 1101, size=nf).astype(float)
    assign = rng.integers(1, 101, size=(nc, nf)).astype(float)

    n = nf + nc * nf
    objective = np.concatenate([fixed, assign.ravel()])
    rows = []
    for c in range(nc):
        rows.append(Row(
            coefs=[(nf + c * nf + f, 1.0) for f in range(nf)],
            rhs=1.0,
            sense=SENSE_EQ,
        ))
    for f in range(nf):
        coefs = [(nf + c * nf + f, demand[c]) for c in range(nc)]
        coefs.append((f, -caps[f]))
        rows.append(Row(coefs=sorted(coefs), rhs=0.0, sense=SENSE_LE))
    lb = np.zeros(n)
    ub = np.ones(n)
    is_integer = np.zeros(n, dtype=bool)
    is_integer[:nf] = True
    return MilpInstance(
        name=f"cflp_{nc}c_{nf}f_s{seed}",
        num_vars=n,
        num_cons=nc + nf,
        objective=objective,
        rows=rows,
        lb=lb,
        ub=ub,
        is_integer=is_integer,
    )


def _ba_edges(n: int, affinity: int, rng) -> list[tuple[int, int]]:
    """Barabasi-Albert preferential attachment edge list on n nodes."""
    m = affinity
    if n <= m:
        raise GenerationError(f"maximum_independent_set needs graph_nodes > affinity ({n} <= {m})")
    edges = []
    repeated = []
    targets = list(range(m))
    for v in range(m, n):
        for t in targets:
            edges.append((min(v, t), max(v, t)))
        repeated.extend(targets)
        repeated.extend([v] * m)
        chosen = set()
        while len(chosen) < m:
            chosen.add(repeated[int(rng.integers(len(repeated)))])
        targets = sorted(chosen)
    return sorted(set(edges))


def mis_from_edges(num_nodes: int, edges, name: str = "mis_custom") -> MilpInstance:
    """Independent-set MILP for an explicit graph: one <=1 row per edge."""
    rows = [
        Row(coefs=[(int(u), 1.0), (int(v), 1.0)], rhs=1.0, sense=SENSE_LE)
        for u, v in edges
    ]
    return MilpInstance(
        name=name,
        num_vars=num_nodes,
        num_cons=len(rows),
        objective=-np.ones(num_nodes),
        rows=rows,
        lb=np.zeros(num_nodes),
        ub=np.ones(num_nodes),
        is_integer=np.ones(num_nodes, dtype=bool),
    )


def _max_independent_set(n: int, affinity: int, rng, seed: int) -> MilpInstance:
    edges = _ba_edges(n, affinity, rng)
    return mis_from_edges(n, edges, name=f"mis_{n}n_a{affinity}_s{seed}")
