"""Exact discrete-probability tables over named binary variables.

Every variable takes values in {0, 1}. A joint table over m variables is a
dense float64 array of shape (2,) * m; flattening it in C order lists cells
with the *last* variable fastest, which is the normative cell-to-index
convention for this package (including JSON serialization).

Conditional-probability matrices follow a fixed orientation: rows index the
target assignment, columns index the conditioning assignment, so each column
is a probability vector over the target. The companion operators resolve the
overloaded "inverse" notation used throughout the bridge solver: applied to a
row vector it means the element-wise reciprocal, applied to a square matrix it
means the ordinary matrix inverse.

All objects are immutable value types; operations return new tables and never
mutate their inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

MASS_TOL = 1e-12        # joint tables must sum to 1 within this
COLUMN_TOL = 1e-10      # conditional columns must sum to 1 within this
DET_TOL = 1e-12         # below this |det| a matrix is treated as singular


class TableError(ValueError):
    """Base class for probability-table failures."""


class UnknownVariableError(TableError):
    """A referenced variable name is not part of the table."""


class ZeroProbabilityError(TableError):
    """A conditioning event has probability zero."""

    def __init__(self, message: str, assignment: Mapping[str, int] | None = None):
        super().__init__(message)
        self.assignment = dict(assignment) if assignment else {}


class SingularMatrixError(TableError):
    """A conditional matrix that must be inverted is numerically singular."""


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class JointPmf:
    """Joint probability mass table over an ordered set of binary variables."""

    names: tuple[str, ...]
    mass: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise TableError(f"duplicate variable names in {names}")
        mass = np.asarray(self.mass, dtype=float)
        expected = (2,) * len(names)
        if mass.shape == (2 ** len(names),):
            mass = mass.reshape(expected)
        if mass.shape != expected:
            raise TableError(f"mass shape {mass.shape} does not match {len(names)} binary variables")
        if np.any(mass < 0):
            raise TableError("negative probability mass")
        total = float(mass.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise TableError(f"mass sums to {total!r}, not 1")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "mass", _as_readonly(mass))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariableError(f"unknown variable {name!r}; table has {self.names}") from None

    def prob(self, assignment: Mapping[str, int]) -> float:
        """Marginal probability of a partial assignment."""
        idx: list[object] = [slice(None)] * len(self.names)
        for name, value in assignment.items():
            idx[self.axis(name)] = int(value)
        return float(self.mass[tuple(idx)].sum())

    def to_json(self) -> str:
        return json.dumps({"order": list(self.names), "mass": self.mass.ravel(order="C").tolist()})

    @classmethod
    def from_json(cls, text: str) -> "JointPmf":
        payload = json.loads(text)
        return cls(tuple(payload["order"]), np.asarray(payload["mass"], dtype=float))


@dataclass(frozen=True)
class CondMatrix:
    """P(target = row | given = col, fixed), one conditional pmf per column."""

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    fixed: Mapping[str, int] = field(default_factory=dict)
    entries: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        shape = (2 ** len(self.rows), 2 ** len(self.cols))
        if entries.shape != shape:
            raise TableError(f"entries shape {entries.shape}, expected {shape}")
        if np.any(entries < -COLUMN_TOL) or np.any(entries > 1 + COLUMN_TOL):
            raise TableError("conditional entries outside [0, 1]")
        colsums = entries.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > COLUMN_TOL):
            raise TableError(f"conditional columns sum to {colsums}, not 1")
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "cols", tuple(self.cols))
        object.__setattr__(self, "fixed", dict(self.fixed))
        object.__setattr__(self, "entries", _as_readonly(entries))


def marginalize(pmf: JointPmf, keep: Sequence[str]) -> JointPmf:
    """Sum out every variable not in ``keep``.

    The result keeps the pmf's own variable order restricted to ``keep``.
    """
    keep_set = set(keep)
    for name in keep_set:
        pmf.axis(name)  # raises UnknownVariableError with the offending name
    kept = tuple(n for n in pmf.names if n in keep_set)
    drop_axes = tuple(i for i, n in enumerate(pmf.names) if n not in keep_set)
    return JointPmf(kept, pmf.mass.sum(axis=drop_axes) if drop_axes else pmf.mass)


def condition(pmf: JointPmf, evidence: Mapping[str, int]) -> JointPmf:
    """Restrict to ``evidence`` and renormalize over the remaining variables."""
    if not evidence:
        return pmf
    idx: list[object] = [slice(None)] * len(pmf.names)
    for name, value in evidence.items():
        idx[pmf.axis(name)] = int(value)
    sliced = pmf.mass[tuple(idx)]
    total = float(sliced.sum())
    if total <= 0.0:
        raise ZeroProbabilityError(f"conditioning event has probability zero: {dict(evidence)}", evidence)
    remaining = tuple(n for n in pmf.names if n not in evidence)
    return JointPmf(remaining, sliced / total)


def _tuple_index(values: int, nvars: int) -> tuple[int, ...]:
    """Decode a row/column index into a bit tuple, last variable fastest."""
    return tuple((values >> (nvars - 1 - i)) & 1 for i in range(nvars))


def cond_matrix(
    pmf: JointPmf,
    target: Sequence[str],
    given: Sequence[str],
    fixed: Mapping[str, int] | None = None,
) -> CondMatrix:
    """Conditional-probability matrix P(target = r | given = c, fixed)."""
    fixed = dict(fixed) if fixed else {}
    target = tuple(target)
    given = tuple(given)
    for name in (*target, *given, *fixed):
        pmf.axis(name)
    if set(fixed) & (set(target) | set(given)):
        raise TableError("fixed variables overlap target/given")
    if target == given:
        # self-conditioning: P(X=r | X=c) is the identity by definition
        return CondMatrix(target, given, fixed, np.eye(2 ** len(target)))
    if set(target) & set(given):
        raise TableError("target and given variables overlap")

    reduced = condition(pmf, fixed) if fixed else pmf
    sub = marginalize(reduced, tuple(target) + tuple(given))
    # joint[target..., given...] with each group in the requested argument order
    order = [sub.axis(n) for n in target] + [sub.axis(n) for n in given]
    joint = np.transpose(sub.mass, order).reshape(2 ** len(target), 2 ** len(given))
    colsums = joint.sum(axis=0)
    for c in range(colsums.size):
        if colsums[c] <= 0.0:
            assignment = dict(zip(given, _tuple_index(c, len(given)))) | fixed
            raise ZeroProbabilityError(
                f"zero-probability conditioning column {assignment} for P({','.join(target)}|{','.join(given)})",
                assignment,
            )
    return CondMatrix(target, given, fixed, joint / colsums)


def broadcast_product(a, b) -> np.ndarray:
    """Element-wise broadcast product of a row vector across a matrix's rows.

    Accepts the two operands in either order; two vectors of equal length
    multiply element-wise. T[i, j] = M[i, j] * v[j].
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 and b.ndim == 1:
        if a.shape != b.shape:
            raise TableError(f"length mismatch {a.shape} vs {b.shape}")
        return a * b
    if a.ndim == 1:
        v, m = a, b
    elif b.ndim == 1:
        v, m = b, a
    else:
        raise TableError("broadcast product needs at least one 1-D operand")
    if m.ndim != 2 or m.shape[1] != v.shape[0]:
        raise TableError(f"cannot broadcast vector of length {v.shape[0]} across matrix {m.shape}")
    return m * v[np.newaxis, :]


def invert2or4(m: np.ndarray, role: str = "conditional matrix") -> np.ndarray:
    """Invert a 2x2 or 4x4 matrix, failing loudly when it is singular.

    A singular matrix here signals a violated completeness/rank condition
    (or an empirical table with too little data), which must surface rather
    than be patched by a pseudo-inverse.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 4):
        raise TableError(f"{role}: expected a 2x2 or 4x4 matrix, got {m.shape}")
    det = float(np.linalg.det(m))
    if abs(det) < DET_TOL:
        raise SingularMatrixError(f"{role} is singular (|det|={abs(det):.3e}); rank condition fails")
    return np.linalg.inv(m)
