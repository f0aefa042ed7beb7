"""Two-stage binary data-generating process with proxy variables.

Eleven binary variables in canonical order

    Y0, U0, Z1, W1, A1, Y1, U1, Z2, W2, A2, Y2

where U0, U1 are hidden confounders, Z1, Z2 treatment-inducing proxies and
W1, W2 outcome-inducing proxies. Each variable follows a logistic (expit)
model in its causal parents; the defaults encode the benchmark generative
law used throughout the tests, including the third-order interactions of the
terminal-outcome score.

The module constructs the exact 2^11 joint law, samples ancestrally with a
counter-based generator, and evaluates ground truth by sequential
standardization (g-formula) over the hidden confounders: the conditional
joint density of potential outcomes, the true value of any regime, and the
class optima found by exhaustive policy enumeration.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .policy import Regime, RegimeClass, enumerate_class, value_maximize
from .tables import JointPmf, ZeroProbabilityError, marginalize

CANONICAL_ORDER = ("Y0", "U0", "Z1", "W1", "A1", "Y1", "U1", "Z2", "W2", "A2", "Y2")
OBSERVED_ORDER = ("Y0", "Z1", "W1", "A1", "Y1", "Z2", "W2", "A2", "Y2")
HIDDEN_ORDER = ("U0", "U1")

# generation order: each variable's parents precede it
SAMPLING_ORDER = ("U0", "Y0", "Z1", "A1", "W1", "Y1", "U1", "W2", "Z2", "A2", "Y2")


def expit(x):
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class LogisticModel:
    """Bernoulli(expit(intercept + sum of coef * product-of-parents)) model.

    ``terms`` maps a tuple of parent names to its coefficient; tuples of
    length > 1 are interaction terms.
    """

    target: str
    intercept: float
    terms: tuple[tuple[tuple[str, ...], float], ...] = ()

    @classmethod
    def build(cls, target: str, intercept: float, terms: Mapping | None = None) -> "LogisticModel":
        items = []
        for key, coef in (terms or {}).items():
            parents = (key,) if isinstance(key, str) else tuple(key)
            items.append((parents, float(coef)))
        return cls(target, float(intercept), tuple(items))

    @property
    def parents(self) -> tuple[str, ...]:
        seen: list[str] = []
        for parents, _ in self.terms:
            for name in parents:
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    def score(self, values: Mapping[str, np.ndarray]):
        total = np.asarray(self.intercept, dtype=float)
        for parents, coef in self.terms:
            prod = values[parents[0]]
            for name in parents[1:]:
                prod = prod * values[name]
            total = total + coef * prod
        return total

    def prob1(self, values: Mapping[str, np.ndarray]):
        return expit(self.score(values))


@dataclass(frozen=True)
class DgpParams:
    """The eleven sequential logistic models, keyed by target variable."""

    models: tuple[LogisticModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        targets = tuple(m.target for m in self.models)
        if sorted(targets) != sorted(CANONICAL_ORDER):
            raise ValueError(f"models must cover {CANONICAL_ORDER}, got {targets}")

    def model(self, target: str) -> LogisticModel:
        for m in self.models:
            if m.target == target:
                return m
        raise KeyError(target)

    @classmethod
    def default(cls) -> "DgpParams":
        b = LogisticModel.build
        return cls((
            b("U0", 0.5),
            b("Y0", -1.0, {"U0": -0.2}),
            b("Z1", -2.0, {"U0": 5.0, "Y0": 0.1}),
            b("A1", -1.0, {"Z1": 0.2, "U0": 2.0, "Y0": -0.25}),
            b("W1", -2.2, {"U0": 5.2, "Y0": 0.1}),
            b("Y1", 0.1, {"A1": -0.55, "W1": 0.25, "U0": 1.0, "Y0": -3.0, ("A1", "Y0"): 5.0}),
            b("U1", 0.1, {"A1": 0.15, "U0": 1.0, "Y0": -0.1}),
            b("W2", -2.0, {"Y1": 0.2, "U1": 5.0, "W1": 0.2, "U0": -0.2, "Y0": -0.2}),
            b("Z2", -2.0, {"Y1": 0.2, "U1": 5.0, "A1": 0.002, "Z1": 0.2, "U0": -0.2, "Y0": -0.2}),
            b("A2", -0.6, {"Y1": 0.2, "U1": 1.5, "Z2": -0.5, "A1": -0.6, "Z1": -0.1, "U0": 0.5, "Y0": 0.2}),
            b("Y2", 0.0, {
                "Y1": -0.25, "A2": 1.0, "U1": 3.0, "W2": -0.7, "A1": -0.25, "W1": -0.7,
                "U0": -3.0, "Y0": -0.25,
                ("Y1", "A2"): -4.0, ("A2", "A1"): 2.0, ("A2", "Y0"): -2.0,
                ("Y1", "A2", "A1"): -1.0, ("Y1", "A2", "Y0"): 8.0, ("A1", "A2", "Y0"): 7.0,
            }),
        ))


@dataclass(frozen=True)
class Dataset:
    """Sampled rows: observed block, plus a hidden (U0, U1) block for Oracle use.

    Estimators other than the Oracle must be built from ``observed`` alone.
    """

    observed: np.ndarray  # (n, 9) int8, columns OBSERVED_ORDER
    hidden: np.ndarray    # (n, 2) int8, columns HIDDEN_ORDER
    seed: int

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.int8)
        hid = np.asarray(self.hidden, dtype=np.int8)
        if obs.ndim != 2 or obs.shape[1] != len(OBSERVED_ORDER):
            raise ValueError(f"observed block must be (n, {len(OBSERVED_ORDER)})")
        if hid.shape != (obs.shape[0], len(HIDDEN_ORDER)):
            raise ValueError("hidden block must be (n, 2)")
        if np.any((obs != 0) & (obs != 1)) or np.any((hid != 0) & (hid != 1)):
            raise ValueError("all cells must be 0/1")
        obs.flags.writeable = False
        hid.flags.writeable = False
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "hidden", hid)

    def __len__(self) -> int:
        return self.observed.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name in OBSERVED_ORDER:
            return self.observed[:, OBSERVED_ORDER.index(name)]
        if name in HIDDEN_ORDER:
            return self.hidden[:, HIDDEN_ORDER.index(name)]
        raise KeyError(name)

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.observed[rows], self.hidden[rows], self.seed)

    def to_csv(self, include_hidden: bool = False) -> str:
        names = OBSERVED_ORDER + HIDDEN_ORDER if include_hidden else OBSERVED_ORDER
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(n.lower() for n in names)
        block = np.hstack([self.observed, self.hidden]) if include_hidden else self.observed
        writer.writerows(block.tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        header = [h.strip().lower() for h in next(reader)]
        expected = [n.lower() for n in OBSERVED_ORDER]
        with_hidden = expected + [n.lower() for n in HIDDEN_ORDER]
        if header == with_hidden:
            hidden_in_file = True
        elif header == expected:
            hidden_in_file = False
        else:
            raise ValueError(f"unexpected CSV header {header}")
        rows = np.asarray([[int(v) for v in row] for row in reader if row], dtype=np.int8)
        obs = rows[:, :9]
        hid = rows[:, 9:11] if hidden_in_file else np.zeros((rows.shape[0], 2), dtype=np.int8)
        return cls(obs, hid, seed)


@dataclass(frozen=True)
class PotentialDensity:
    """f(Y2(a1,a2)=y2, Y1(a1)=y1 | Y0=y0) and the stage-1 marginal.

    ``g[a1, a2, y2, y1, y0]`` and ``g1[a1, y1, y0]``.
    """

    g: np.ndarray
    g1: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        g1 = np.asarray(self.g1, dtype=float)
        if g.shape != (2,) * 5 or g1.shape != (2,) * 3:
            raise ValueError("g must be (2,)*5 and g1 (2,)*3")
        g.flags.writeable = False
        g1.flags.writeable = False
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "g1", g1)


def _grid_values() -> dict[str, np.ndarray]:
    axes = np.indices((2,) * len(CANONICAL_ORDER))
    return {name: axes[i] for i, name in enumerate(CANONICAL_ORDER)}


def true_joint(params: DgpParams) -> JointPmf:
    """Exact joint law: the product of all eleven model factors on the 2^11 grid."""
    values = _grid_values()
    mass = np.ones((2,) * len(CANONICAL_ORDER))
    for model in params.models:
        p1 = model.prob1(values)
        target = values[model.target]
        mass = mass * np.where(target == 1, p1, 1.0 - p1)
    return JointPmf(CANONICAL_ORDER, mass)


def interventional_joint(params: DgpParams, a1: int, a2: int) -> JointPmf:
    """Joint law with both treatments forced: drop the A factors, pin their values.

    The result is still indexed over all eleven variables; cells with
    (A1, A2) different from (a1, a2) carry zero mass.
    """
    values = _grid_values()
    mass = np.ones((2,) * len(CANONICAL_ORDER))
    for model in params.models:
        if model.target in ("A1", "A2"):
            continue
        p1 = model.prob1(values)
        target = values[model.target]
        mass = mass * np.where(target == 1, p1, 1.0 - p1)
    mass = mass * (values["A1"] == a1) * (values["A2"] == a2)
    return JointPmf(CANONICAL_ORDER, mass)


def sample(params: DgpParams, n: int, seed: int) -> Dataset:
    """Ancestral sampling with the counter-based Philox generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    columns: dict[str, np.ndarray] = {}
    for name in SAMPLING_ORDER:
        p1 = params.model(name).prob1(columns)
        p1 = np.broadcast_to(p1, (n,))
        columns[name] = (rng.random(n) < p1).astype(np.int8)
    observed = np.column_stack([columns[name] for name in OBSERVED_ORDER])
    hidden = np.column_stack([columns[name] for name in HIDDEN_ORDER])
    return Dataset(observed, hidden, seed)


def _conditional(pmf: JointPmf, target: Sequence[str], given: Sequence[str]) -> np.ndarray:
    """P(target | given) as an array indexed [given..., target...]."""
    sub = marginalize(pmf, tuple(given) + tuple(target))
    order = [sub.axis(n) for n in given] + [sub.axis(n) for n in target]
    joint = np.transpose(sub.mass, order)
    k = len(given)
    den = joint.sum(axis=tuple(range(k, joint.ndim)), keepdims=True)
    if np.any(den <= 0.0):
        raise ZeroProbabilityError(
            f"zero-probability conditioning cell among {tuple(given)} while computing P({tuple(target)}|{tuple(given)})"
        )
    return joint / den


def oracle_density_from_joint(pmf: JointPmf) -> PotentialDensity:
    """Potential-outcome density by standardizing over the hidden confounders.

    g(a1,a2,y2,y1,y0) = sum_{u0,u1} P(y2|y0,y1,u0,u1,a1,a2) P(u1|y0,y1,u0,a1)
                        P(y1|y0,u0,a1) P(u0|y0)

    computed from the (true or empirical) 11-variable joint law. Raises on
    zero-probability conditioning cells rather than imputing.
    """
    p_u0 = _conditional(pmf, ("U0",), ("Y0",))                     # [y0, u0]
    p_y1 = _conditional(pmf, ("Y1",), ("Y0", "U0", "A1"))           # [y0, u0, a1, y1]
    p_u1 = _conditional(pmf, ("U1",), ("Y0", "Y1", "U0", "A1"))     # [y0, y1, u0, a1, u1]
    p_y2 = _conditional(pmf, ("Y2",), ("Y0", "Y1", "U0", "U1", "A1", "A2"))  # [y0,y1,u0,u1,a1,a2,y2]
    # axis letters: a=y0 b=y1 c=u0 d=u1 e=a1 f=a2 g=y2
    g = np.einsum("abcdefg,abced,aceb,ac->efgba", p_y2, p_u1, p_y1, p_u0)
    g1 = np.einsum("aceb,ac->eba", p_y1, p_u0)
    return PotentialDensity(g, g1)


def oracle_potential_density(params: DgpParams) -> PotentialDensity:
    return oracle_density_from_joint(true_joint(params))


def regime_value(g: np.ndarray, p_y0: np.ndarray, regime: Regime) -> float:
    """Indicator-weighted terminal-outcome mean under a potential density.

    V = sum_{y0,y1} P(y0) * g[d1(y0), d2(y0,y1,d1(y0)), y2=1, y1, y0].
    """
    total = 0.0
    for y0 in (0, 1):
        a1 = regime.d1_of(y0)
        for y1 in (0, 1):
            a2 = regime.d2_of(y0, y1, a1)
            total += p_y0[y0] * g[a1, a2, 1, y1, y0]
    return float(total)


def marginal_y0(pmf: JointPmf) -> np.ndarray:
    return marginalize(pmf, ("Y0",)).mass


def true_value(params: DgpParams, regime: Regime) -> float:
    """Exact value of a regime under the true law."""
    density = oracle_potential_density(params)
    return regime_value(density.g, marginal_y0(true_joint(params)), regime)


def optimal_value(params: DgpParams, cls: str | RegimeClass) -> tuple[float, Regime]:
    """Exhaustive maximum of the true value over a regime class."""
    if isinstance(cls, str):
        cls = enumerate_class(cls)
    density = oracle_potential_density(params)
    p_y0 = marginal_y0(true_joint(params))
    regime, value = value_maximize(lambda r: regime_value(density.g, p_y0, r), cls)
    return value, regime
