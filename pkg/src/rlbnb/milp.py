"""MILP instance container, validation, and JSON round-trip I/O.

Everything downstream treats instances as immutable: generators build them,
the solver and feature encoder only read them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SENSE_LE = "<="
SENSE_GE = ">="
SENSE_EQ = "="
SENSES = (SENSE_LE, SENSE_GE, SENSE_EQ)

FILE_SUFFIX = ".milp.json"


class DecodeError(ValueError):
    """Malformed instance JSON; the message names the offending field."""


@dataclass
class Row:
    """One linear constraint: sum(coef * x[idx]) <sense> rhs."""

    coefs: list[tuple[int, float]]
    rhs: float
    sense: str

    def activity(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.coefs))

    def satisfied(self, x, tol: float = 1e-7) -> bool:
        act = self.activity(x)
        if self.sense == SENSE_LE:
            return act <= self.rhs + tol
        if self.sense == SENSE_GE:
            return act >= self.rhs - tol
        return abs(act - self.rhs) <= tol


@dataclass(eq=False)
class MilpInstance:
    """Minimisation MILP: min c.x subject to rows, lb <= x <= ub, integrality mask."""

    name: str
    num_vars: int
    num_cons: int
    objective: np.ndarray
    rows: list[Row]
    lb: np.ndarray
    ub: np.ndarray
    is_integer: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.is_integer = np.asarray(self.is_integer, dtype=bool)

    @property
    def num_integer(self) -> int:
        return int(self.is_integer.sum())

    def dense_matrix(self) -> np.ndarray:
        """Dense m x n constraint matrix, cached on first use."""
        cached = getattr(self, "_dense", None)
        if cached is None:
            a = np.zeros((self.num_cons, self.num_vars))
            for i, row in enumerate(self.rows):
                for j, coef in row.coefs:
                    a[i, j] = coef
            self._dense = cached = a
        return cached

    def feasible(self, x, tol: float = 1e-7) -> bool:
        """Direct constraint evaluation of an assignment (bounds + rows)."""
        x = np.asarray(x, dtype=float)
        if (x < self.lb - tol).any() or (x > self.ub + tol).any():
            return False
        return all(row.satisfied(x, tol) for row in self.rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.num_vars == other.num_vars
            and self.num_cons == other.num_cons
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.lb, other.lb)
            and np.array_equal(self.ub, other.ub)
            and np.array_equal(self.is_integer, other.is_integer)
            and self.rows == other.rows
        )


def validate(inst: MilpInstance) -> list[str]:
    """Return a list of invariant violations, empty when the instance is well formed."""
    bad = []
    n, m = inst.num_vars, inst.num_cons
    for field_name, arr in (
        ("objective", inst.objective),
        ("lb", inst.lb),
        ("ub", inst.ub),
        ("is_integer", inst.is_integer),
    ):
        if len(arr) != n:
            bad.append(f"{field_name}: length {len(arr)} != num_vars {n}")
    if len(inst.rows) != m:
        bad.append(f"rows: length {len(inst.rows)} != num_cons {m}")
    if not np.isfinite(inst.objective).all():
        bad.append("objective: non-finite coefficient")
    for i, row in enumerate(inst.rows):
        if row.sense not in SENSES:
            bad.append(f"rows[{i}]: unknown sense {row.sense!r}")
        if not math.isfinite(row.rhs):
            bad.append(f"rows[{i}]: non-finite rhs")
        seen = set()
        for j, coef in row.coefs:
            if not 0 <= j < n:
                bad.append(f"rows[{i}]: var_index {j} out of range [0, {n})")
            elif j in seen:
                bad.append(f"rows[{i}]: duplicate var_index {j}")
            seen.add(j)
            if not math.isfinite(coef):
                bad.append(f"rows[{i}]: non-finite coefficient for var {j}")
    if len(inst.lb) == n and len(inst.ub) == n:
        for j in range(n):
            if inst.lb[j] > inst.ub[j]:
                bad.append(f"bounds[{j}]: lb {inst.lb[j]} > ub {inst.ub[j]}")
        if len(inst.is_integer) == n:
            for j in np.flatnonzero(inst.is_integer):
                for side, v in (("lb", inst.lb[j]), ("ub", inst.ub[j])):
                    if math.isfinite(v) and abs(v - round(v)) > 1e-9:
                        bad.append(f"bounds[{j}]: non-integral {side} {v} on integer variable")
    return bad


def _bound_to_json(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return float(v)


def _bound_from_json(v, field: str) -> float:
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise DecodeError(f"{field}: expected number, 'inf' or '-inf', got {v!r}")


def encode(inst: MilpInstance) -> bytes:
    """Serialise a valid instance to its canonical JSON bytes."""
    bad = validate(inst)
    if bad:
        raise ValueError("cannot encode invalid instance: " + "; ".join(bad))
    obj = {
        "name": inst.name,
        "num_vars": inst.num_vars,
        "num_cons": inst.num_cons,
        "objective": [float(v) for v in inst.objective],
        "rows": [
            {
                "coefs": [[int(j), float(a)] for j, a in row.coefs],
                "rhs": float(row.rhs),
                "sense": row.sense,
            }
            for row in inst.rows
        ],
        "lb": [_bound_to_json(v) for v in inst.lb],
        "ub": [_bound_to_json(v) for v in inst.ub],
        "is_integer": [bool(v) for v in inst.is_integer],
    }
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def _require(obj: dict, field: str, kind=None):
    if field not in obj:
        raise DecodeError(f"missing required field {field!r}")
    value = obj[field]
    if kind is not None and not isinstance(value, kind):
        raise DecodeError(f"{field}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def decode(data: bytes | str) -> MilpInstance:
    """Parse instance JSON; raises DecodeError with field context on bad input."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("top-level JSON value must be an object")

    name = _require(obj, "name", str)
    num_vars = _require(obj, "num_vars", int)
    num_cons = _require(obj, "num_cons", int)
    objective = _require(obj, "objective", list)
    raw_rows = _require(obj, "rows", list)
    lb = [_bound_from_json(v, f"lb[{i}]") for i, v in enumerate(_require(obj, "lb", list))]
    ub = [_bound_from_json(v, f"ub[{i}]") for i, v in enumerate(_require(obj, "ub", list))]
    is_integer = _require(obj, "is_integer", list)

    rows = []
    for i, raw in enumerate(raw_rows):
        if not isinstance(raw, dict):
            raise DecodeError(f"rows[{i}]: expected object")
        coefs = _require(raw, "coefs", list)
        pairs = []
        for k, pair in enumerate(coefs):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise DecodeError(f"rows[{i}].coefs[{k}]: expected [index, coefficient] pair")
            pairs.append((int(pair[0]), float(pair[1])))
        sense = _require(raw, "sense", str)
        if sense not in SENSES:
            raise DecodeError(f"rows[{i}].sense: {sense!r} not one of {SENSES}")
        rows.append(Row(coefs=pairs, rhs=float(_require(raw, "rhs", (int, float))), sense=sense))

    inst = MilpInstance(
        name=name,
        num_vars=num_vars,
        num_cons=num_cons,
        objective=np.asarray(objective, dtype=float),
        rows=rows,
        lb=np.asarray(lb, dtype=float),
        ub=np.asarray(ub, dtype=float),
        is_integer=np.asarray(is_integer, dtype=bool),
    )
    bad = validate(inst)
    if bad:
        raise DecodeError("; ".join(bad))
    return inst


def save(inst: MilpInstance, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(inst))


def load(path) -> MilpInstance:
    with open(path, "rb") as fh:
        return decode(fh.read())
