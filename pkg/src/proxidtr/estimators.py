"""Sample-level value estimators, cross-fitting, and baseline comparators.

Every estimator is an empirical average of a per-row summand built from the
bridge tables:

  POR   the h21-weighted stage-1 term alone
  PHA   stage-1 compliance * q11 * the y2-weighted h22 term
  PIPW  full compliance * q22 * Y2
  PMR   the three-term multiply robust combination (the influence function
        without its centering constant)

In the categorical setting each empirical average coincides exactly with the
corresponding plug-in value on the empirical cell-frequency table, which the
test suite exploits as an algebraic cross-check. A telescoped rearrangement
of the PMR summand is implemented separately and must agree to 1e-12 row by
row.

The SRA baseline ignores unmeasured confounding (a plain g-formula on the
observed conditionals); the Oracle baseline standardizes over the hidden
confounder columns and is only available when those are carried.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bridges import BridgeSet, pseudo_bridges, solve_bridges
from .dgp import CANONICAL_ORDER, OBSERVED_ORDER, Dataset, oracle_density_from_joint
from .identify import IdentifiedDensity, observed_conditional, value_from_density
from .policy import Regime
from .tables import JointPmf, SingularMatrixError, ZeroProbabilityError

ESTIMATOR_METHODS = ("POR", "PHA", "PIPW", "PMR")


@dataclass(frozen=True)
class FitOptions:
    """Bridge-fitting configuration: folds, smoothing, misspecification.

    ``laplace`` is the additive cell smoothing constant (0 = raw maximum
    likelihood). ``pseudo_components`` names the bridge components replaced
    by random pseudo versions drawn from ``pseudo_seed``.
    """

    folds: int = 1
    laplace: float = 0.0
    pseudo_components: tuple[str, ...] = ()
    pseudo_seed: int = 0

    def __post_init__(self):
        if self.folds < 1:
            raise ValueError("folds must be >= 1")
        if self.laplace < 0:
            raise ValueError("laplace smoothing must be >= 0")
        object.__setattr__(self, "pseudo_components", tuple(self.pseudo_components))


@dataclass(frozen=True)
class ValueEstimate:
    method: str
    estimate: float
    variance: float | None = None
    fold_estimates: tuple[float, ...] | None = None

    def to_json(self) -> str:
        payload: dict = {"method": self.method, "estimate": self.estimate}
        if self.variance is not None:
            payload["variance"] = self.variance
        if self.fold_estimates is not None:
            payload["folds"] = list(self.fold_estimates)
        return json.dumps(payload)


def empirical_pmf(data: Dataset, rows: np.ndarray | None = None, laplace: float = 0.0,
                  include_hidden: bool = False) -> JointPmf:
    """Cell-frequency table of a dataset (optionally Laplace-smoothed)."""
    obs = data.observed if rows is None else data.observed[rows]
    if include_hidden:
        hid = data.hidden if rows is None else data.hidden[rows]
        names = CANONICAL_ORDER
        cols = np.column_stack([
            hid[:, 1] if n == "U1" else hid[:, 0] if n == "U0" else obs[:, OBSERVED_ORDER.index(n)]
            for n in names
        ])
    else:
        names = OBSERVED_ORDER
        cols = obs
    m = len(names)
    weights = (1 << np.arange(m - 1, -1, -1)).astype(np.int64)
    codes = cols.astype(np.int64) @ weights
    counts = np.bincount(codes, minlength=2 ** m).astype(float) + laplace
    return JointPmf(names, counts / counts.sum())


def fold_assignments(data: Dataset, folds: int) -> np.ndarray:
    """Deterministic fold ids derived from (data seed, folds)."""
    ss = np.random.SeedSequence(entropy=int(data.seed), spawn_key=(int(folds), 0xF01D))
    rng = np.random.Generator(np.random.Philox(seed=ss))
    n = len(data)
    out = np.empty(n, dtype=np.int64)
    out[rng.permutation(n)] = np.arange(n) % folds
    return out


def fit_bridges(data: Dataset, opts: FitOptions = FitOptions(),
                exclude_fold: int | None = None) -> tuple[JointPmf, BridgeSet]:
    """Empirical law plus closed-form bridges, with scenario substitutions.

    With ``exclude_fold`` set, only rows outside that fold enter the fit
    (the cross-fitting "off-fold" nuisance estimate).
    """
    rows = None
    if exclude_fold is not None:
        rows = fold_assignments(data, opts.folds) != exclude_fold
    pmf = empirical_pmf(data, rows, laplace=opts.laplace)
    try:
        solved = solve_bridges(pmf, provenance="solved-from-sample")
    except (SingularMatrixError, ZeroProbabilityError) as err:
        raise type(err)(
            f"{err}; the empirical table is too sparse to solve the bridges - "
            "increase n or enable Laplace smoothing"
        ) from err
    if opts.pseudo_components:
        solved = solved.merged(pseudo_bridges(opts.pseudo_seed, opts.pseudo_components))
    return pmf, solved


def _columns(data: Dataset, rows: np.ndarray | None = None) -> dict[str, np.ndarray]:
    obs = data.observed if rows is None else data.observed[rows]
    return {name: obs[:, i].astype(np.int64) for i, name in enumerate(OBSERVED_ORDER)}


def _summands(method: str, cols: Mapping[str, np.ndarray], b: BridgeSet, regime: Regime) -> np.ndarray:
    """Per-row estimator summand; the empirical mean is the value estimate."""
    y0, z1, w1, a1 = cols["Y0"], cols["Z1"], cols["W1"], cols["A1"]
    y1, z2, w2, a2, y2 = cols["Y1"], cols["Z2"], cols["W2"], cols["A2"], cols["Y2"]
    d1 = np.asarray(regime.d1, dtype=np.int64)
    d2 = np.asarray(regime.d2, dtype=np.int64).reshape(2, 2, 2)
    a1_star = d1[y0]
    comply1 = (a1 == a1_star).astype(float)
    a2_star = d2[y0, y1, a1]
    comply2 = comply1 * (a2 == a2_star)

    def j1_star() -> np.ndarray:
        # sum over the counterfactual stage-1 outcome, a2 pinned by the regime
        total = np.zeros(y0.shape, dtype=float)
        for y1v in (0, 1):
            a2v = d2[y0, y1v, a1_star]
            total = total + b.h21[y0, y1v, 1, w1, a1_star, a2v]
        return total

    if method == "POR":
        b.require("h21")
        return j1_star()
    if method == "PHA":
        b.require("h22", "q11")
        j2c = b.h22[y0, y1, 1, w1, w2, a1, d2[y0, y1, a1]]
        return comply1 * b.q11[y0, a1, z1] * j2c
    if method == "PIPW":
        b.require("q22")
        return comply2 * b.q22[y0, y1, a1, a2, z1, z2] * y2
    if method == "PMR":
        b.require("h22", "h21", "q11", "q22")
        j2_obs = b.h22[y0, y1, 1, w1, w2, a1, a2]
        j2c = b.h22[y0, y1, 1, w1, w2, a1, d2[y0, y1, a1]]
        j1 = j1_star()
        c2 = comply2 * b.q22[y0, y1, a1, a2, z1, z2]
        c1 = comply1 * b.q11[y0, a1, z1]
        return c2 * (y2 - j2_obs) + c1 * (j2c - j1) + j1
    raise ValueError(f"unknown method {method!r}; expected one of {ESTIMATOR_METHODS}")


def _pmr_telescoped(cols: Mapping[str, np.ndarray], b: BridgeSet, regime: Regime) -> np.ndarray:
    """The telescoped PMR summand: weighted differences of coarsening levels."""
    b.require("h22", "h21", "q11", "q22")
    y0, z1, w1, a1 = cols["Y0"], cols["Z1"], cols["W1"], cols["A1"]
    y1, z2, w2, a2, y2 = cols["Y1"], cols["Z2"], cols["W2"], cols["A2"], cols["Y2"]
    d1 = np.asarray(regime.d1, dtype=np.int64)
    d2 = np.asarray(regime.d2, dtype=np.int64).reshape(2, 2, 2)
    a1_star = d1[y0]
    c1 = (a1 == a1_star) * b.q11[y0, a1, z1]
    c2 = (a1 == a1_star) * (a2 == d2[y0, y1, a1]) * b.q22[y0, y1, a1, a2, z1, z2]
    j2 = b.h22[y0, y1, 1, w1, w2, a1_star, d2[y0, y1, a1_star]]
    j1 = np.zeros(y0.shape, dtype=float)
    for y1v in (0, 1):
        j1 = j1 + b.h21[y0, y1v, 1, w1, a1_star, d2[y0, y1v, a1_star]]
    return c2 * y2 + (c1 - c2) * j2 + (1.0 - c1) * j1


def v_hat(method: str, data: Dataset, b: BridgeSet, regime: Regime) -> ValueEstimate:
    """Empirical-average value estimate for one method."""
    summand = _summands(method, _columns(data), b, regime)
    return ValueEstimate(method, float(summand.mean()))


def v_hat_pmr_alt(data: Dataset, b: BridgeSet, regime: Regime) -> ValueEstimate:
    """Telescoped PMR form; equals ``v_hat("PMR", ...)`` to 1e-12 always."""
    summand = _pmr_telescoped(_columns(data), b, regime)
    return ValueEstimate("PMR", float(summand.mean()))


def cross_fit(method: str, data: Dataset, opts: FitOptions, regime: Regime) -> ValueEstimate:
    """Fold-wise off-fold fitting, averaged in fold order."""
    if opts.folds == 1:
        _, b = fit_bridges(data, opts)
        return v_hat(method, data, b, regime)
    assignments = fold_assignments(data, opts.folds)
    fold_values = []
    for fold in range(opts.folds):
        try:
            _, b = fit_bridges(data, opts, exclude_fold=fold)
        except (SingularMatrixError, ZeroProbabilityError) as err:
            raise type(err)(f"off-fold fit failed for fold {fold}: {err}") from err
        cols = _columns(data, assignments == fold)
        fold_values.append(float(_summands(method, cols, b, regime).mean()))
    return ValueEstimate(method, float(np.mean(fold_values)), fold_estimates=tuple(fold_values))


def if_variance(data: Dataset, b: BridgeSet, regime: Regime) -> float:
    """Influence-function variance: second moment of the centered PMR summand.

    Centering uses the plug-in point estimate, so the empirical mean of the
    influence terms is zero by construction.
    """
    summand = _summands("PMR", _columns(data), b, regime)
    centered = summand - summand.mean()
    return float((centered ** 2).mean())


def population_v(method: str, pmf: JointPmf, b: BridgeSet, regime: Regime) -> float:
    """Expected estimator summand under a law: cells enumerated and weighted.

    With ``pmf`` the true law and correct bridges this equals the true value
    (the population mean-zero property of the influence function).
    """
    cond, p_y0 = observed_conditional(pmf)
    weights = (cond * p_y0[(slice(None),) + (None,) * 8]).reshape(-1)
    grid = np.indices((2,) * 9).reshape(9, -1)
    cols = {name: grid[i].astype(np.int64) for i, name in enumerate(OBSERVED_ORDER)}
    return float(np.dot(weights, _summands(method, cols, b, regime)))


def sra_density(pmf: JointPmf) -> IdentifiedDensity:
    """No-unmeasured-confounding g-formula on the observed conditionals:
    g(a1,a2,y2,y1,y0) = f(y2|y0,y1,a1,a2) f(y1|y0,a1)."""
    cond, _ = observed_conditional(pmf)
    joint5 = cond.sum(axis=(1, 2, 5, 6))  # [y0, a1, y1, a2, y2]
    den2 = joint5.sum(axis=4, keepdims=True)
    if np.any(den2 <= 0.0):
        raise ZeroProbabilityError("empty (y0, a1, y1, a2) cell in the SRA outcome model")
    f_y2 = joint5 / den2
    joint3 = joint5.sum(axis=(3, 4))  # [y0, a1, y1]
    den1 = joint3.sum(axis=2, keepdims=True)
    if np.any(den1 <= 0.0):
        raise ZeroProbabilityError("empty (y0, a1) cell in the SRA stage-1 model")
    f_y1 = joint3 / den1
    g = np.einsum("aebfc,aeb->efcba", f_y2, f_y1)
    return IdentifiedDensity(g, "SRA")


def oracle_density(source: Dataset | JointPmf, laplace: float = 0.0) -> IdentifiedDensity:
    """Hidden-confounder-adjusted density, from the true law or from sampled
    rows that carry the hidden columns."""
    if isinstance(source, Dataset):
        pmf = empirical_pmf(source, laplace=laplace, include_hidden=True)
    else:
        pmf = source
    dens = oracle_density_from_joint(pmf)
    return IdentifiedDensity(dens.g, "ORACLE")


def sra_value(source: Dataset | JointPmf, regime: Regime, laplace: float = 0.0) -> ValueEstimate:
    pmf = empirical_pmf(source, laplace=laplace) if isinstance(source, Dataset) else source
    return ValueEstimate("SRA", value_from_density(sra_density(pmf), pmf, regime))


def oracle_value(source: Dataset | JointPmf, regime: Regime, laplace: float = 0.0) -> ValueEstimate:
    if isinstance(source, Dataset):
        pmf = empirical_pmf(source, laplace=laplace, include_hidden=True)
    else:
        pmf = source
    dens = oracle_density_from_joint(pmf)
    return ValueEstimate("ORACLE", value_from_density(dens.g, pmf, regime))
