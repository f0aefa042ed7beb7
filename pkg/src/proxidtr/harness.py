"""Monte Carlo experiment orchestration: scenarios x methods x repetitions.

One repetition samples a dataset, fits bridges under a misspecification
scenario, picks a regime either by value maximization over an enumerated
class or by Q-learning on the estimated density, and scores it two ways:

  regret         V(d*) - V(d_hat), both under the true law, where d* is the
                 optimum of the class searched (the Boolean-class optimum
                 for Q-learning)
  overall error  |V(d*) - V_hat(d_hat)|, charging the estimated value of the
                 chosen regime against the true optimum

Scenario tags name which submodel stays correct: the outcome-bridge pair
(m0-correct), the hybrid pair h22+q11 (m1-correct), or the treatment-bridge
pair (m2-correct); all-correct and all-wrong bracket them. The corrupted
components are replaced by pseudo bridges drawn once per experiment from a
fixed seed, so repetitions share one corruption.

Everything is deterministic in the config: repetition seeds are
base_seed + index, aggregation runs in index order, and table emission is
byte-stable. Repetition failures (rank/positivity errors on sparse tables)
are counted and excluded, never silently dropped. ``PROXIDTR_THREADS``
caps worker processes; the default is serial.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import identify
from .bridges import MissingBridgeError, pseudo_bridges, solve_bridges, verify_bridges
from .dgp import DgpParams, marginal_y0, oracle_potential_density, regime_value, sample, true_joint
from .estimators import (
    FitOptions,
    empirical_pmf,
    fit_bridges,
    oracle_density,
    sra_density,
)
from .identify import q_functions
from .policy import Regime, enumerate_class, q_learning_regime, value_maximize
from .tables import TableError

EPSILON = 1e-10  # values below this render as "<eps"
DEFAULT_PSEUDO_SEED = 20

SCENARIO_PSEUDO = {
    "all-correct": (),
    "m0-correct": ("q11", "q22"),
    "m1-correct": ("h21", "q22"),
    "m2-correct": ("h22", "h21"),
    "all-wrong": ("h22", "h21", "q11", "q22"),
}

BRIDGE_METHODS = ("POR", "PHA", "PIPW", "PMR")
ALL_METHODS = BRIDGE_METHODS + ("SRA", "ORACLE")

_DENSITY_FN = {
    "POR": identify.density_por,
    "PHA": identify.density_pha,
    "PIPW": identify.density_pipw,
    "PMR": identify.density_pmr,
}


@dataclass(frozen=True)
class Scenario:
    tag: str
    pseudo_seed: int = DEFAULT_PSEUDO_SEED

    def __post_init__(self):
        if self.tag not in SCENARIO_PSEUDO:
            raise ValueError(f"unknown scenario {self.tag!r}; choose from {sorted(SCENARIO_PSEUDO)}")

    @property
    def pseudo_components(self) -> tuple[str, ...]:
        return SCENARIO_PSEUDO[self.tag]


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple[str, ...] = tuple(SCENARIO_PSEUDO)
    methods: tuple[str, ...] = ALL_METHODS
    optimizer: str = "value-max"
    n: int = 35000
    reps: int = 20
    base_seed: int = 20240601
    pseudo_seed: int = DEFAULT_PSEUDO_SEED
    folds: int = 1
    laplace: float = 0.0
    regime_class: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        for scenario in self.scenarios:
            if scenario not in SCENARIO_PSEUDO:
                raise ValueError(f"unknown scenario {scenario!r}")
        for method in self.methods:
            if method not in ALL_METHODS:
                raise ValueError(f"unknown method {method!r}")
        if self.optimizer not in ("value-max", "q-learning"):
            raise ValueError("optimizer must be 'value-max' or 'q-learning'")
        if self.regime_class not in ("linear", "all-boolean"):
            raise ValueError("regime_class must be 'linear' or 'all-boolean'")
        if self.reps < 1 or self.n < 1:
            raise ValueError("n and reps must be >= 1")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    se: float
    rmse: float


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    method: str
    count: int
    failures: int
    regret: MetricSummary
    overall_error: MetricSummary


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    cells: tuple[CellSummary, ...] = field(default_factory=tuple)

    def cell(self, scenario: str, method: str) -> CellSummary:
        for c in self.cells:
            if c.scenario == scenario and c.method == method.upper():
                return c
        raise KeyError((scenario, method))


def _summary(values: list[float]) -> MetricSummary:
    if not values:
        return MetricSummary(float("nan"), float("nan"), float("nan"))
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return MetricSummary(float(arr.mean()), se, float(np.sqrt((arr ** 2).mean())))


class _Truth:
    """Ground-truth context shared by every repetition of an experiment."""

    def __init__(self, params: DgpParams, regime_class: str):
        self.params = params
        joint = true_joint(params)
        self.p_y0 = marginal_y0(joint)
        self.oracle_g = oracle_potential_density(params).g
        self.search_class = enumerate_class(regime_class)
        self.boolean_class = enumerate_class("all-boolean")
        self.true_values = {
            (r.d1, r.d2): regime_value(self.oracle_g, self.p_y0, r)
            for r in self.boolean_class.members
        }
        _, self.optimum_value = value_maximize(self._true_value, self.search_class)
        _, self.boolean_optimum = value_maximize(self._true_value, self.boolean_class)

    def _true_value(self, regime: Regime) -> float:
        return self.true_values[(regime.d1, regime.d2)]


def _cf_density_tables(data, opts: FitOptions, method: str):
    """Per-fold (density, p_y0) pairs for the cross-fit value function."""
    from .estimators import fold_assignments

    tables = []
    assignments = fold_assignments(data, opts.folds)
    for fold in range(opts.folds):
        _, bridges_l = fit_bridges(data, opts, exclude_fold=fold)
        pmf_l = empirical_pmf(data, assignments == fold, laplace=opts.laplace)
        g_l = _DENSITY_FN[method](pmf_l, bridges_l).g
        cond, p_y0_l = identify.observed_conditional(pmf_l)
        del cond
        tables.append((g_l, p_y0_l))
    return tables


def _estimated_tables(data, scenario: Scenario, config: ExperimentConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(g, p_y0) per requested method; value function is their contraction."""
    opts = FitOptions(
        folds=config.folds,
        laplace=config.laplace,
        pseudo_components=scenario.pseudo_components,
        pseudo_seed=scenario.pseudo_seed,
    )
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    bridge_methods = [m for m in config.methods if m in BRIDGE_METHODS]
    if bridge_methods:
        if config.folds == 1:
            pmf, bridges_hat = fit_bridges(data, opts)
            _, p_y0 = identify.observed_conditional(pmf)
            for method in bridge_methods:
                out[method] = (_DENSITY_FN[method](pmf, bridges_hat).g, p_y0)
        else:
            for method in bridge_methods:
                tables = _cf_density_tables(data, opts, method)
                p_bar = sum(p for _, p in tables) / len(tables)
                g_bar = sum(g * p[None, None, None, None, :] for g, p in tables) / len(tables)
                out[method] = (g_bar / p_bar[None, None, None, None, :], p_bar)
    if "SRA" in config.methods:
        pmf_obs = empirical_pmf(data, laplace=config.laplace)
        _, p_y0 = identify.observed_conditional(pmf_obs)
        out["SRA"] = (sra_density(pmf_obs).g, p_y0)
    if "ORACLE" in config.methods:
        pmf_full = empirical_pmf(data, laplace=config.laplace, include_hidden=True)
        _, p_y0 = identify.observed_conditional(pmf_full)
        out["ORACLE"] = (oracle_density(pmf_full).g, p_y0)
    return out


def _score_regime(truth: _Truth, g: np.ndarray, p_y0: np.ndarray, optimizer: str):
    """Pick a regime from an estimated density and score it against truth."""
    if optimizer == "value-max":
        d_hat, v_hat_opt = value_maximize(partial(regime_value, g, p_y0), truth.search_class)
        benchmark = truth.optimum_value
        estimated = v_hat_opt
    else:
        q2, q1 = q_functions(g)
        d_hat = q_learning_regime(q2, q1)
        benchmark = truth.boolean_optimum
        estimated = regime_value(g, p_y0, d_hat)
    true_v = truth.true_values[(d_hat.d1, d_hat.d2)]
    return benchmark - true_v, abs(benchmark - estimated)


def _run_rep(config: ExperimentConfig, truth: _Truth, rep: int):
    """All (scenario, method) results for one repetition; errors per cell."""
    data = sample(truth.params, config.n, config.base_seed + rep)
    results: dict[tuple[str, str], tuple[float, float] | str] = {}
    baseline_cache: dict[str, tuple[np.ndarray, np.ndarray] | str] = {}
    for tag in config.scenarios:
        scenario = Scenario(tag, config.pseudo_seed)
        tables: dict[str, tuple[np.ndarray, np.ndarray] | str] = {}
        bridge_methods = [m for m in config.methods if m in BRIDGE_METHODS]
        baselines = [m for m in config.methods if m not in BRIDGE_METHODS]
        if bridge_methods:
            try:
                fitted = _estimated_tables(
                    data, scenario, replace(config, methods=tuple(bridge_methods))
                )
                tables.update(fitted)
            except (TableError, MissingBridgeError) as err:
                for method in bridge_methods:
                    tables[method] = f"fit failed: {err}"
        for method in baselines:
            if method not in baseline_cache:
                try:
                    baseline_cache[method] = _estimated_tables(
                        data, scenario, replace(config, methods=(method,))
                    )[method]
                except (TableError, MissingBridgeError) as err:
                    baseline_cache[method] = f"fit failed: {err}"
            tables[method] = baseline_cache[method]
        for method in config.methods:
            entry = tables[method]
            if isinstance(entry, str):
                results[(tag, method)] = entry
                continue
            g, p_y0 = entry
            try:
                results[(tag, method)] = _score_regime(truth, g, p_y0, config.optimizer)
            except (TableError, MissingBridgeError) as err:
                results[(tag, method)] = f"scoring failed: {err}"
    return results


def _worker(args):
    config, rep = args
    truth = _truth_context(config)
    return _run_rep(config, truth, rep)


_TRUTH_CACHE: dict[tuple, _Truth] = {}


def _truth_context(config: ExperimentConfig) -> _Truth:
    key = (config.regime_class,)
    if key not in _TRUTH_CACHE:
        _TRUTH_CACHE[key] = _Truth(DgpParams.default(), config.regime_class)
    return _TRUTH_CACHE[key]


def worker_count() -> int:
    raw = os.environ.get("PROXIDTR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(config: ExperimentConfig, params: DgpParams | None = None) -> ExperimentReport:
    """Run the full grid and aggregate regret / overall error per cell."""
    truth = _Truth(params, config.regime_class) if params is not None else _truth_context(config)
    # worker processes rebuild the default-law context; custom laws run serially
    workers = worker_count() if params is None else 1
    if workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.reps)) as pool:
            rep_results = list(pool.map(_worker, [(config, r) for r in range(config.reps)]))
    else:
        rep_results = [_run_rep(config, truth, rep) for rep in range(config.reps)]
    cells = []
    for tag in config.scenarios:
        for method in config.methods:
            regrets: list[float] = []
            overalls: list[float] = []
            failures = 0
            for rep in range(config.reps):
                outcome = rep_results[rep][(tag, method)]
                if isinstance(outcome, str):
                    failures += 1
                else:
                    regrets.append(outcome[0])
                    overalls.append(outcome[1])
            cells.append(CellSummary(tag, method, len(regrets), failures,
                                     _summary(regrets), _summary(overalls)))
    return ExperimentReport(config, tuple(cells))


def _fmt(value: float) -> str:
    if np.isnan(value):
        return "nan"
    if abs(value) < EPSILON:
        return "<eps"
    return f"{value:.4f}"


def emit_tables(report: ExperimentReport) -> tuple[str, str]:
    """(csv, aligned_text). CSV keeps raw numbers so it round-trips; the
    text tables apply the sub-epsilon rendering convention."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "scenario", "method", "optimizer", "n", "reps", "count", "failures",
        "regret_mean", "regret_se", "regret_rmse",
        "overall_mean", "overall_se", "overall_rmse",
    ])
    for c in report.cells:
        writer.writerow([
            c.scenario, c.method, report.config.optimizer, report.config.n,
            report.config.reps, c.count, c.failures,
            repr(c.regret.mean), repr(c.regret.se), repr(c.regret.rmse),
            repr(c.overall_error.mean), repr(c.overall_error.se), repr(c.overall_error.rmse),
        ])
    csv_text = buf.getvalue()

    methods = list(report.config.methods)
    present = {(c.scenario, c.method) for c in report.cells}
    tags = [t for t in report.config.scenarios if any(s == t for s, _ in present)]
    lines = []
    for metric, title in (("regret", "Regret"), ("overall_error", "Overall error")):
        lines.append(f"{title} ({report.config.optimizer}, n={report.config.n}, reps={report.config.reps})")
        header = f"{'scenario':<14}" + "".join(f"{m:>18}" for m in methods)
        lines.append(header)
        for tag in tags:
            row = f"{tag:<14}"
            for m in methods:
                c = report.cell(tag, m)
                block = getattr(c, metric)
                row += f"{_fmt(block.mean) + ' (' + _fmt(block.se) + ')':>18}"
            lines.append(row)
        lines.append(f"{'  [rmse]':<14}" + "")
        for tag in tags:
            row = f"{tag:<14}"
            for m in methods:
                c = report.cell(tag, m)
                row += f"{_fmt(getattr(c, metric).rmse):>18}"
            lines.append(row)
        lines.append("")
    return csv_text, "\n".join(lines)


def parse_report_csv(text: str) -> list[dict]:
    """Inverse of the CSV side of ``emit_tables`` (numbers parsed back)."""
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for raw in reader:
        row = dict(raw)
        for key in ("n", "reps", "count", "failures"):
            row[key] = int(row[key])
        for key in ("regret_mean", "regret_se", "regret_rmse",
                    "overall_mean", "overall_se", "overall_rmse"):
            row[key] = float(row[key])
        rows.append(row)
    return rows


@dataclass(frozen=True)
class IdentifyCheckResult:
    deviations: dict
    residuals_pass: bool
    tolerance: float
    passed: bool
    bridges: object = None
    densities: dict | None = None


def identify_check(params: DgpParams | None = None, pseudo: tuple[str, ...] = (),
                   pseudo_seed: int = DEFAULT_PSEUDO_SEED, tolerance: float = 1e-9) -> IdentifyCheckResult:
    """End-to-end identification diagnostic on the exact law.

    Solves bridges from the true joint table (optionally corrupting some
    components), identifies the potential-outcome density all four ways, and
    compares each to the hidden-confounder standardization oracle.
    """
    params = params or DgpParams.default()
    joint = true_joint(params)
    bridges_hat = solve_bridges(joint, provenance="solved-from-truth")
    if pseudo:
        bridges_hat = bridges_hat.merged(pseudo_bridges(pseudo_seed, pseudo))
    oracle_g = oracle_potential_density(params).g
    deviations = {}
    densities = {}
    for method, fn in _DENSITY_FN.items():
        densities[method] = fn(joint, bridges_hat)
        deviations[method] = float(np.abs(densities[method].g - oracle_g).max())
    residuals = verify_bridges(bridges_hat, joint)
    passed = all(dev <= tolerance for dev in deviations.values())
    return IdentifyCheckResult(deviations, residuals.all_passed, tolerance, passed,
                               bridges_hat, densities)
