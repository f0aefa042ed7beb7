"""Closed-form confounding-bridge solving on exact probability tables.

Outcome bridges (h22, h21, h11) and treatment bridges (q11, q22) are the
functions of proxy variables that stand in for the hidden-confounder
adjustment. In the all-binary setting they solve small linear systems built
from conditional-probability matrices of the observed law, so they admit
closed forms; the same formulas applied to an empirical table give the
maximum-likelihood plug-in estimates.

Table layouts (all axes binary, C order):

    q11[y0, a1, z1]
    q22[y0, y1, a1, a2, z1, z2]
    h22[y0, y1, y2, w1, w2, a1, a2]
    h21[y0, y1, y2, w1, a1, a2]
    h11[y0, y1, w1, a1]

The defining residual equations (see ``verify_bridges``) hold at 1e-10 when
solved from an exact law and at 1e-8 when solved from an empirical one.
Deliberately wrong "pseudo" bridges, drawn at random per component, support
misspecification studies; provenance strings record where every component
came from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .tables import (
    JointPmf,
    ZeroProbabilityError,
    broadcast_product,
    cond_matrix,
    invert2or4,
)

RESIDUAL_TOL = 1e-8

_COMPONENTS = ("h22", "h21", "q11", "q22")
_SHAPES = {
    "q11": (2, 2, 2),
    "q22": (2,) * 6,
    "h22": (2,) * 7,
    "h21": (2,) * 6,
    "h11": (2,) * 4,
}


class MissingBridgeError(ValueError):
    """An operation needs a bridge component the set does not carry."""


def _frozen(arr: np.ndarray | None, name: str) -> np.ndarray | None:
    if arr is None:
        return None
    out = np.array(arr, dtype=float)
    if out.shape != _SHAPES[name]:
        raise ValueError(f"{name} must have shape {_SHAPES[name]}, got {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TreatmentBridge:
    q11: np.ndarray | None = None
    q22: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q11", _frozen(self.q11, "q11"))
        object.__setattr__(self, "q22", _frozen(self.q22, "q22"))


@dataclass(frozen=True)
class OutcomeBridge:
    h22: np.ndarray | None = None
    h21: np.ndarray | None = None
    h11: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "h22", _frozen(self.h22, "h22"))
        object.__setattr__(self, "h21", _frozen(self.h21, "h21"))
        object.__setattr__(self, "h11", _frozen(self.h11, "h11"))


@dataclass(frozen=True)
class BridgeSet:
    """Outcome and treatment bridges with per-component provenance."""

    outcome: OutcomeBridge = field(default_factory=OutcomeBridge)
    treatment: TreatmentBridge = field(default_factory=TreatmentBridge)
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def h22(self):
        return self.outcome.h22

    @property
    def h21(self):
        return self.outcome.h21

    @property
    def h11(self):
        return self.outcome.h11

    @property
    def q11(self):
        return self.treatment.q11

    @property
    def q22(self):
        return self.treatment.q22

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise MissingBridgeError(f"bridge component {name!r} is missing")

    def merged(self, override: "BridgeSet") -> "BridgeSet":
        """New set taking every component that ``override`` carries."""
        out = self.outcome
        tr = self.treatment
        prov = dict(self.provenance)
        for name in ("h22", "h21", "h11"):
            if getattr(override.outcome, name) is not None:
                out = replace(out, **{name: getattr(override.outcome, name)})
                prov[name] = override.provenance.get(name, "overridden")
        for name in ("q11", "q22"):
            if getattr(override.treatment, name) is not None:
                tr = replace(tr, **{name: getattr(override.treatment, name)})
                prov[name] = override.provenance.get(name, "overridden")
        return BridgeSet(out, tr, prov)

    def to_json(self) -> str:
        payload: dict = {"provenance": dict(self.provenance)}
        for name in ("h22", "h21", "h11", "q11", "q22"):
            arr = getattr(self, name)
            if arr is None:
                continue
            payload[name] = {
                ",".join(map(str, idx)): float(arr[idx]) for idx in np.ndindex(arr.shape)
            }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "BridgeSet":
        payload = json.loads(text)
        arrays: dict[str, np.ndarray | None] = {n: None for n in _SHAPES}
        for name in _SHAPES:
            if name in payload:
                arr = np.zeros(_SHAPES[name])
                for key, value in payload[name].items():
                    arr[tuple(int(b) for b in key.split(","))] = value
                arrays[name] = arr
        return cls(
            OutcomeBridge(arrays["h22"], arrays["h21"], arrays["h11"]),
            TreatmentBridge(arrays["q11"], arrays["q22"]),
            payload.get("provenance", {}),
        )


def _reciprocal_row(row: np.ndarray, what: str) -> np.ndarray:
    if np.any(row <= 0.0):
        raise ZeroProbabilityError(f"positivity fails: {what} has a zero entry")
    return 1.0 / row


def solve_q(pmf: JointPmf) -> TreatmentBridge:
    """Treatment bridges by the reciprocal-propensity/proxy-inversion chain.

    q11 row (over z1)  = P(a1|W1,y0)^-1  P(Z1|W1,a1,y0)^-1
    q22 row (over z2b) = q11 P(Z1|a1,W2b,y1b) . P(a2|W2b,a1,y1b)^-1 P(Z2b|a2b,W2b,y1b)^-1

    where a row vector's ^-1 is the element-wise reciprocal and a square
    matrix's ^-1 the ordinary inverse (bars denote the stage-2 pairs).
    """
    q11 = np.zeros(_SHAPES["q11"])
    for y0 in (0, 1):
        pa1 = cond_matrix(pmf, ("A1",), ("W1",), {"Y0": y0}).entries
        for a1 in (0, 1):
            recip = _reciprocal_row(pa1[a1, :], f"P(A1={a1}|W1,Y0={y0})")
            m = cond_matrix(pmf, ("Z1",), ("W1",), {"A1": a1, "Y0": y0}).entries
            inv = invert2or4(m, role=f"P(Z1|W1) at (Y0={y0},A1={a1})")
            q11[y0, a1, :] = recip @ inv
    q22 = np.zeros(_SHAPES["q22"])
    for y0 in (0, 1):
        for y1 in (0, 1):
            for a1 in (0, 1):
                fixed = {"Y0": y0, "Y1": y1, "A1": a1}
                mz1 = cond_matrix(pmf, ("Z1",), ("W1", "W2"), fixed).entries
                row_w = q11[y0, a1, :] @ mz1
                pa2 = cond_matrix(pmf, ("A2",), ("W1", "W2"), fixed).entries
                for a2 in (0, 1):
                    recip = _reciprocal_row(pa2[a2, :], f"P(A2={a2}|W1,W2,{fixed})")
                    row = broadcast_product(row_w, recip)
                    m = cond_matrix(pmf, ("Z1", "Z2"), ("W1", "W2"), {**fixed, "A2": a2}).entries
                    inv = invert2or4(m, role=f"P(Z1,Z2|W1,W2) at (Y0={y0},Y1={y1},A1={a1},A2={a2})")
                    q22[y0, y1, a1, a2] = (row @ inv).reshape(2, 2)
    return TreatmentBridge(q11, q22)


def solve_h(pmf: JointPmf) -> OutcomeBridge:
    """Outcome bridges by proxy-matrix inversion.

    h22 row (over w2b) = P(y2|Z2b,y1b,a2b) P(W2b|Z2b,y1b,a2b)^-1
    h21 row (over w1)  = h22 P(W2b,y1|Z1,y0,a1) P(W1|Z1,y0,a1)^-1
    h11 row (over w1)  = P(y1|Z1,y0,a1) P(W1|Z1,y0,a1)^-1
    """
    h22 = np.zeros(_SHAPES["h22"])
    for y0 in (0, 1):
        for y1 in (0, 1):
            for a1 in (0, 1):
                for a2 in (0, 1):
                    fixed = {"Y0": y0, "Y1": y1, "A1": a1, "A2": a2}
                    mw = cond_matrix(pmf, ("W1", "W2"), ("Z1", "Z2"), fixed).entries
                    inv = invert2or4(mw, role=f"P(W1,W2|Z1,Z2) at {fixed}")
                    py2 = cond_matrix(pmf, ("Y2",), ("Z1", "Z2"), fixed).entries
                    for y2 in (0, 1):
                        h22[y0, y1, y2, :, :, a1, a2] = (py2[y2, :] @ inv).reshape(2, 2)
    h21 = np.zeros(_SHAPES["h21"])
    h11 = np.zeros(_SHAPES["h11"])
    for y0 in (0, 1):
        for a1 in (0, 1):
            fixed1 = {"Y0": y0, "A1": a1}
            mw1 = cond_matrix(pmf, ("W1",), ("Z1",), fixed1).entries
            inv_w1 = invert2or4(mw1, role=f"P(W1|Z1) at {fixed1}")
            # rows (w1, w2, y1), cols z1
            joint_w2y1 = cond_matrix(pmf, ("W1", "W2", "Y1"), ("Z1",), fixed1).entries
            joint_w2y1 = joint_w2y1.reshape(2, 2, 2, 2)  # [w1, w2, y1, z1]
            py1 = cond_matrix(pmf, ("Y1",), ("Z1",), fixed1).entries
            for y1 in (0, 1):
                mid = joint_w2y1[:, :, y1, :].reshape(4, 2)  # [(w1,w2), z1]
                for a2 in (0, 1):
                    for y2 in (0, 1):
                        chain = h22[y0, y1, y2, :, :, a1, a2].reshape(4)
                        h21[y0, y1, y2, :, a1, a2] = (chain @ mid) @ inv_w1
                h11[y0, y1, :, a1] = py1[y1, :] @ inv_w1
    return OutcomeBridge(h22, h21, h11)


def solve_bridges(pmf: JointPmf, provenance: str = "solved-from-truth") -> BridgeSet:
    """Solve all components from one law and tag them with its provenance."""
    outcome = solve_h(pmf)
    treatment = solve_q(pmf)
    prov = {name: provenance for name in ("h22", "h21", "h11", "q11", "q22")}
    return BridgeSet(outcome, treatment, prov)


def _component_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seed=ss))


def pseudo_bridges(seed: int, which: Iterable[str] = _COMPONENTS) -> BridgeSet:
    """Deliberately misspecified bridges, deterministic in the seed.

    Outcome components are drawn Uniform(0,1) and normalized to sum to one
    over their outcome arguments (y2 for h22; (y1, y2) for h21), treatment
    components Uniform(0.5, 4). Each component has its own substream, so a
    component's values do not depend on which other components are requested.
    """
    which = set(which)
    unknown = which - set(_COMPONENTS)
    if unknown:
        raise ValueError(f"unknown pseudo components {sorted(unknown)}; choose from {_COMPONENTS}")
    arrays: dict[str, np.ndarray] = {}
    for index, name in enumerate(_COMPONENTS):
        if name not in which:
            continue
        rng = _component_rng(seed, index)
        if name == "h22":
            raw = rng.uniform(0.0, 1.0, size=_SHAPES["h22"])
            arrays[name] = raw / raw.sum(axis=2, keepdims=True)
        elif name == "h21":
            raw = rng.uniform(0.0, 1.0, size=_SHAPES["h21"])
            arrays[name] = raw / raw.sum(axis=(1, 2), keepdims=True)
        else:
            arrays[name] = rng.uniform(0.5, 4.0, size=_SHAPES[name])
    prov = {name: f"pseudo({seed})" for name in arrays}
    return BridgeSet(
        OutcomeBridge(arrays.get("h22"), arrays.get("h21"), None),
        TreatmentBridge(arrays.get("q11"), arrays.get("q22")),
        prov,
    )


@dataclass(frozen=True)
class ResidualReport:
    """Max absolute residual of each defining equation family."""

    q11: float
    q22: float
    h22: float
    h21: float
    tol: float = RESIDUAL_TOL

    def passed(self, family: str) -> bool:
        return getattr(self, family) <= self.tol

    @property
    def all_passed(self) -> bool:
        return all(self.passed(f) for f in ("q11", "q22", "h22", "h21"))

    def as_dict(self) -> dict:
        return {
            "tol": self.tol,
            "families": {
                f: {"max_residual": getattr(self, f), "pass": self.passed(f)}
                for f in ("q11", "q22", "h22", "h21")
            },
        }


def verify_bridges(b: BridgeSet, pmf: JointPmf, tol: float = RESIDUAL_TOL) -> ResidualReport:
    """Plug every component back into its defining integral equation.

    The q22 equation is evaluated with the set's own q11 (the equations are
    nested), so corrupting q11 surfaces in both treatment families.
    """
    b.require("h22", "h21", "q11", "q22")
    r_q11 = r_q22 = r_h22 = r_h21 = 0.0
    for y0 in (0, 1):
        # rows (z1, a1), cols w1
        fz1a1 = cond_matrix(pmf, ("Z1", "A1"), ("W1",), {"Y0": y0}).entries.reshape(2, 2, 2)
        for a1 in (0, 1):
            for w1 in (0, 1):
                acc = sum(b.q11[y0, a1, z1] * fz1a1[z1, a1, w1] for z1 in (0, 1))
                r_q11 = max(r_q11, abs(acc - 1.0))
    for y0 in (0, 1):
        for y1 in (0, 1):
            for a1 in (0, 1):
                fixed = {"Y0": y0, "Y1": y1, "A1": a1}
                # rows (z1, z2, a2), cols (w1, w2)
                fza = cond_matrix(pmf, ("Z1", "Z2", "A2"), ("W1", "W2"), fixed).entries.reshape(2, 2, 2, 4)
                fz1 = cond_matrix(pmf, ("Z1",), ("W1", "W2"), fixed).entries
                for a2 in (0, 1):
                    lhs = np.einsum("zt,ztw->w", b.q22[y0, y1, a1, a2], fza[:, :, a2, :])
                    rhs = b.q11[y0, a1, :] @ fz1
                    r_q22 = max(r_q22, float(np.abs(lhs - rhs).max()))
    for y0 in (0, 1):
        for y1 in (0, 1):
            for a1 in (0, 1):
                for a2 in (0, 1):
                    fixed = {"Y0": y0, "Y1": y1, "A1": a1, "A2": a2}
                    fy2 = cond_matrix(pmf, ("Y2",), ("Z1", "Z2"), fixed).entries
                    fw = cond_matrix(pmf, ("W1", "W2"), ("Z1", "Z2"), fixed).entries
                    for y2 in (0, 1):
                        rhs = b.h22[y0, y1, y2, :, :, a1, a2].reshape(4) @ fw
                        r_h22 = max(r_h22, float(np.abs(fy2[y2, :] - rhs).max()))
    for y0 in (0, 1):
        for a1 in (0, 1):
            fixed1 = {"Y0": y0, "A1": a1}
            fw2y1 = cond_matrix(pmf, ("W1", "W2", "Y1"), ("Z1",), fixed1).entries.reshape(2, 2, 2, 2)
            fw1 = cond_matrix(pmf, ("W1",), ("Z1",), fixed1).entries
            for y1 in (0, 1):
                mid = fw2y1[:, :, y1, :].reshape(4, 2)
                for a2 in (0, 1):
                    for y2 in (0, 1):
                        lhs = b.h22[y0, y1, y2, :, :, a1, a2].reshape(4) @ mid
                        rhs = b.h21[y0, y1, y2, :, a1, a2] @ fw1
                        r_h21 = max(r_h21, float(np.abs(lhs - rhs).max()))
    return ResidualReport(r_q11, r_q22, r_h22, r_h21, tol)


@dataclass(frozen=True)
class CollapseReport:
    """Summed-out h21 checked as a one-stage outcome bridge."""

    equation_residual: float
    h11_gap: float | None


def bridge_collapse_check(b: OutcomeBridge, pmf: JointPmf) -> CollapseReport:
    """Sum h21 over y2 and test it against the h11 defining equation.

    The collapsed table nominally still carries an a2 argument; at a law
    where the bridges are exact it must satisfy the one-stage equation for
    both a2 values and coincide with h11 (which is unique here).
    """
    if b.h21 is None:
        raise MissingBridgeError("bridge component 'h21' is missing")
    collapsed = b.h21.sum(axis=2)  # [y0, y1, w1, a2_position...] -> [y0, y1, w1, a1, a2]
    eq_res = 0.0
    for y0 in (0, 1):
        for a1 in (0, 1):
            fixed1 = {"Y0": y0, "A1": a1}
            fy1 = cond_matrix(pmf, ("Y1",), ("Z1",), fixed1).entries
            fw1 = cond_matrix(pmf, ("W1",), ("Z1",), fixed1).entries
            for y1 in (0, 1):
                for a2 in (0, 1):
                    rhs = collapsed[y0, y1, :, a1, a2] @ fw1
                    eq_res = max(eq_res, float(np.abs(fy1[y1, :] - rhs).max()))
    gap = None
    if b.h11 is not None:
        gap = float(max(np.abs(collapsed[..., a2] - b.h11).max() for a2 in (0, 1)))
    return CollapseReport(eq_res, gap)
