"""Sample-level estimators: algebraic identities, consistency, cross-fitting.

The load-bearing identities are exact, not statistical: the empirical-average
forms must coincide with plug-in evaluation on the empirical table, and the
telescoped PMR rearrangement must match the three-term form row for row, for
arbitrary (even corrupted) bridges.
"""

import numpy as np
import pytest

from proxidtr import dgp, identify
from proxidtr.bridges import pseudo_bridges, verify_bridges
from proxidtr.dgp import Dataset
from proxidtr.estimators import (
    FitOptions,
    cross_fit,
    empirical_pmf,
    fit_bridges,
    fold_assignments,
    if_variance,
    oracle_value,
    population_v,
    sra_density,
    sra_value,
    v_hat,
    v_hat_pmr_alt,
)
from proxidtr.policy import Regime
from proxidtr.tables import SingularMatrixError, ZeroProbabilityError

METHODS = ("POR", "PHA", "PIPW", "PMR")
REGIME = Regime((1, 0), (0, 1, 1, 0, 1, 0, 0, 1))


@pytest.fixture(scope="module")
def fitted(big_data):
    return fit_bridges(big_data)


@pytest.fixture(scope="module")
def small_data(params):
    return dgp.sample(params, 1000, seed=77)


def test_empirical_pmf_matches_counts(small_data):
    pmf = empirical_pmf(small_data)
    first = dict(zip(dgp.OBSERVED_ORDER, small_data.observed[0]))
    count = sum(
        1 for row in small_data.observed
        if all(row[i] == first[name] for i, name in enumerate(dgp.OBSERVED_ORDER))
    )
    assert pmf.prob(first) == pytest.approx(count / len(small_data), abs=1e-12)


def test_fit_bridges_residuals_on_empirical_pmf(fitted):
    pmf, bridges_hat = fitted
    assert verify_bridges(bridges_hat, pmf).all_passed
    assert bridges_hat.provenance["h22"] == "solved-from-sample"


def test_fit_bridges_scenario_provenance(big_data):
    opts = FitOptions(pseudo_components=("h22", "h21"), pseudo_seed=3)
    _, bridges_hat = fit_bridges(big_data, opts)
    assert bridges_hat.provenance["h22"] == "pseudo(3)"
    assert bridges_hat.provenance["q11"] == "solved-from-sample"


def test_fit_bridges_sparse_data_advises(params):
    tiny = dgp.sample(params, 300, seed=5)
    with pytest.raises((SingularMatrixError, ZeroProbabilityError), match="smoothing"):
        fit_bridges(tiny)


def test_plug_in_equivalence_all_methods(small_data, solved):
    # exact identity for arbitrary bridge tables, correct or corrupted
    pmf = empirical_pmf(small_data)
    corrupted = solved.merged(pseudo_bridges(9, ("h21", "q22")))
    density_fn = {
        "POR": identify.density_por,
        "PHA": identify.density_pha,
        "PIPW": identify.density_pipw,
        "PMR": identify.density_pmr,
    }
    for method in METHODS:
        direct = v_hat(method, small_data, corrupted, REGIME).estimate
        plug = identify.value_from_density(density_fn[method](pmf, corrupted), pmf, REGIME)
        assert direct == pytest.approx(plug, abs=1e-12)


def test_pmr_alt_form_agrees_exactly(small_data, fitted, big_data):
    _, bridges_hat = fitted
    for bridges_used in (bridges_hat, bridges_hat.merged(pseudo_bridges(21))):
        a = v_hat("PMR", small_data, bridges_used, REGIME).estimate
        b = v_hat_pmr_alt(small_data, bridges_used, REGIME).estimate
        assert a == pytest.approx(b, abs=1e-12)
    a = v_hat("PMR", big_data, bridges_hat, REGIME).estimate
    b = v_hat_pmr_alt(big_data, bridges_hat, REGIME).estimate
    assert a == pytest.approx(b, abs=1e-12)


def test_constant_outcome_returns_one(big_data):
    forced = Dataset(
        np.column_stack([big_data.observed[:, :8], np.ones(len(big_data), dtype=np.int8)]),
        big_data.hidden,
        big_data.seed,
    )
    _, bridges_hat = fit_bridges(forced)
    for method in METHODS:
        assert v_hat(method, forced, bridges_hat, REGIME).estimate == pytest.approx(1.0, abs=1e-10)
    assert v_hat_pmr_alt(forced, bridges_hat, REGIME).estimate == pytest.approx(1.0, abs=1e-10)
    assert if_variance(forced, bridges_hat, REGIME) == pytest.approx(0.0, abs=1e-12)


def test_consistency_at_n35000(params, big_data, fitted, linear_class):
    _, bridges_hat = fitted
    rng = np.random.default_rng(123)
    picks = rng.choice(len(linear_class.members), size=10, replace=False)
    for idx in picks:
        regime = linear_class.members[int(idx)]
        truth = dgp.true_value(params, regime)
        for method in METHODS:
            estimate = v_hat(method, big_data, bridges_hat, regime).estimate
            assert abs(estimate - truth) <= 0.02


def test_population_if_mean_zero_at_truth(params, joint, solved, linear_class):
    for regime in linear_class.members[::97]:
        truth = dgp.true_value(params, regime)
        assert population_v("PMR", joint, solved, regime) == pytest.approx(truth, abs=1e-10)


def test_if_variance_nonnegative_and_centering(big_data, fitted):
    _, bridges_hat = fitted
    var = if_variance(big_data, bridges_hat, REGIME)
    assert var >= 0.0
    # centering at the plug-in estimate makes the IF mean vanish identically
    from proxidtr.estimators import _columns, _summands

    summand = _summands("PMR", _columns(big_data), bridges_hat, REGIME)
    point = v_hat("PMR", big_data, bridges_hat, REGIME).estimate
    assert (summand - point).mean() == pytest.approx(0.0, abs=1e-12)


def test_cross_fit_degenerate_single_fold(big_data):
    cf = cross_fit("PMR", big_data, FitOptions(folds=1), REGIME)
    _, bridges_hat = fit_bridges(big_data)
    assert cf.estimate == v_hat("PMR", big_data, bridges_hat, REGIME).estimate
    assert cf.fold_estimates is None


def test_cross_fit_five_folds(big_data):
    cf = cross_fit("PMR", big_data, FitOptions(folds=5), REGIME)
    assert cf.fold_estimates is not None and len(cf.fold_estimates) == 5
    assert cf.estimate == pytest.approx(np.mean(cf.fold_estimates), abs=1e-12)
    _, bridges_hat = fit_bridges(big_data)
    assert abs(cf.estimate - v_hat("PMR", big_data, bridges_hat, REGIME).estimate) <= 0.02


def test_off_fold_bridge_sets_differ(big_data):
    opts = FitOptions(folds=5)
    sets = [fit_bridges(big_data, opts, exclude_fold=fold)[1] for fold in range(5)]
    for i in range(4):
        assert np.abs(sets[i].h21 - sets[i + 1].h21).max() > 1e-12


def test_fold_assignment_deterministic_and_balanced(big_data):
    a = fold_assignments(big_data, 5)
    b = fold_assignments(big_data, 5)
    np.testing.assert_array_equal(a, b)
    counts = np.bincount(a)
    assert counts.max() - counts.min() <= 1


def test_estimate_order_invariance_under_row_permutation(small_data, fitted):
    _, bridges_hat = fitted
    rng = np.random.default_rng(1)
    perm = rng.permutation(len(small_data))
    shuffled = Dataset(small_data.observed[perm], small_data.hidden[perm], small_data.seed)
    for method in METHODS:
        v_orig = v_hat(method, small_data, bridges_hat, REGIME).estimate
        v_perm = v_hat(method, shuffled, bridges_hat, REGIME).estimate
        assert v_orig == v_perm


def test_oracle_value_exact_at_true_law(params, joint):
    for regime in (REGIME, Regime((1, 1), (1,) * 8)):
        assert oracle_value(joint, regime).estimate == pytest.approx(
            dgp.true_value(params, regime), abs=1e-12
        )


def test_oracle_value_from_sampled_hidden_columns(params, big_data):
    est = oracle_value(big_data, REGIME).estimate
    assert abs(est - dgp.true_value(params, REGIME)) <= 0.02


def test_sra_value_is_confounded(params, big_data, joint):
    # population-level SRA must not equal the truth under this law
    truth = dgp.true_value(params, REGIME)
    population_sra = sra_value(joint, REGIME).estimate
    assert abs(population_sra - truth) > 0.01
    sampled = sra_value(big_data, REGIME).estimate
    assert abs(sampled - population_sra) < 0.02


def test_sra_density_normalizes(joint):
    d = sra_density(joint)
    np.testing.assert_allclose(d.slice_sums(), 1.0, atol=1e-12)


def test_sample_scale_multiple_robustness(params, big_data, fitted, linear_class):
    # with only one bridge pair correct, PMR stays near the truth for every
    # probe regime while the fully corrupted single method visibly errs
    _, bridges_hat = fitted
    rng = np.random.default_rng(7)
    picks = [linear_class.members[int(i)] for i in
             rng.choice(len(linear_class.members), size=10, replace=False)]
    scenarios = {
        "m0": (("q11", "q22"), "PIPW"),
        "m1": (("h21", "q22"), "POR"),
        "m2": (("h22", "h21"), "PHA"),
    }
    for pseudo_of, corrupted_method in scenarios.values():
        merged = bridges_hat.merged(pseudo_bridges(20, pseudo_of))
        worst_single = 0.0
        for regime in picks:
            truth = dgp.true_value(params, regime)
            assert abs(v_hat("PMR", big_data, merged, regime).estimate - truth) <= 0.03
            single = v_hat(corrupted_method, big_data, merged, regime).estimate
            worst_single = max(worst_single, abs(single - truth))
        assert worst_single > 0.05


def test_monotone_consistency_in_n(params):
    # estimator-level convergence trend; Laplace smoothing keeps the small-n
    # fits solvable, failures at n=2000 are skipped and counted
    errors = {}
    for n in (2000, 10000, 35000):
        devs = []
        for rep in range(20):
            data = dgp.sample(params, n, seed=909 + rep)
            try:
                _, bridges_hat = fit_bridges(data, FitOptions(laplace=0.5))
            except (SingularMatrixError, ZeroProbabilityError):
                continue
            truth = dgp.true_value(params, REGIME)
            devs.append(abs(v_hat("PMR", data, bridges_hat, REGIME).estimate - truth))
        assert devs, f"no successful fits at n={n}"
        errors[n] = float(np.mean(devs))
    assert errors[10000] <= errors[2000] + 0.005
    assert errors[35000] <= errors[10000] + 0.005


def test_value_estimate_json():
    import json

    from proxidtr.estimators import ValueEstimate

    payload = json.loads(ValueEstimate("PMR", 0.4, 0.01, (0.39, 0.41)).to_json())
    assert payload == {"method": "PMR", "estimate": 0.4, "variance": 0.01, "folds": [0.39, 0.41]}
