"""Regime classes, enumeration, value maximization, and Q-learning extraction.

The linear-class membership is re-derived here with an independent
separability search (different weight grid, different scoring path) to
confirm the canonical 104 count and that no separable table is missed.
"""

import itertools

import numpy as np
import pytest

from proxidtr import dgp
from proxidtr.policy import (
    D2_CELLS,
    Regime,
    enumerate_class,
    q_learning_regime,
    regime_equivalence_key,
    value_maximize,
)


def test_linear_class_counts(linear_class):
    d1_tables = {r.d1 for r in linear_class.members}
    d2_tables = {r.d2 for r in linear_class.members}
    assert len(d1_tables) == 4
    assert len(d2_tables) == 104
    assert len(linear_class.members) == 416


def test_boolean_class_count(boolean_class):
    assert len(boolean_class.members) == 1024
    assert len({(r.d1, r.d2) for r in boolean_class.members}) == 1024


def test_separable_tables_match_independent_search(linear_class):
    # independent certificate generator: a different integer grid, scored
    # through plain Python, with the strict ">= 1" margin trick
    points = [(1, y0, y1, a1) for y0, y1, a1 in D2_CELLS]
    separable = set()
    for weights in itertools.product(range(-3, 4), repeat=4):
        w = (2 * weights[0] - 1, 2 * weights[1], 2 * weights[2], 2 * weights[3])
        table = tuple(int(sum(wi * xi for wi, xi in zip(w, p)) > 0) for p in points)
        separable.add(table)
    enumerated = {r.d2 for r in linear_class.members}
    assert enumerated == separable
    assert len(separable) == 104


def test_linear_members_carry_reproducing_thetas(linear_class):
    for r in linear_class.members:
        assert abs(np.linalg.norm(r.theta1) - 1.0) < 1e-9
        assert abs(np.linalg.norm(r.theta2) - 1.0) < 1e-9
        for y0 in (0, 1):
            assert int(r.theta1[0] + r.theta1[1] * y0 > 0) == r.d1_of(y0)
        for y0, y1, a1 in D2_CELLS:
            score = r.theta2[0] + r.theta2[1] * y0 + r.theta2[2] * y1 + r.theta2[3] * a1
            assert int(score > 0) == r.d2_of(y0, y1, a1)


def test_enumeration_is_canonically_ordered(linear_class, boolean_class):
    for cls in (linear_class, boolean_class):
        keys = [(r.d1_index, r.d2_index) for r in cls.members]
        assert keys == sorted(keys)


def test_bad_class_tag():
    with pytest.raises(ValueError):
        enumerate_class("quadratic")


def test_theta_must_reproduce_tables():
    with pytest.raises(ValueError):
        Regime((1, 1), (0,) * 8, theta1=(1.0, 0.0), theta2=(1.0, 0.0, 0.0, 0.0))


def test_regime_json_round_trip(linear_class):
    r = linear_class.members[37]
    again = Regime.from_json(r.to_json())
    assert again.d1 == r.d1 and again.d2 == r.d2
    assert again.theta1 == pytest.approx(r.theta1)
    bare = Regime((0, 1), (0, 1, 0, 1, 1, 0, 1, 0))
    assert Regime.from_json(bare.to_json()) == bare


def test_value_maximize_constant_returns_first(boolean_class):
    regime, value = value_maximize(lambda r: 0.25, boolean_class)
    assert regime is boolean_class.members[0]
    assert value == 0.25


def test_value_maximize_matches_brute_max(linear_class):
    rng = np.random.default_rng(11)
    score = {(r.d1, r.d2): rng.random() for r in linear_class.members}
    regime, value = value_maximize(lambda r: score[(r.d1, r.d2)], linear_class)
    assert value == max(score.values())
    assert score[(regime.d1, regime.d2)] == value


def test_subset_monotonicity(linear_class, boolean_class):
    rng = np.random.default_rng(5)
    table = rng.random((2, 2, 2, 2))  # value per on-path profile

    def fn(r):
        return sum(
            table[y0, y1, r.d1_of(y0), r.d2_of(y0, y1, r.d1_of(y0))]
            for y0 in (0, 1)
            for y1 in (0, 1)
        )

    _, lin = value_maximize(fn, linear_class)
    _, boo = value_maximize(fn, boolean_class)
    assert boo >= lin


def test_q_learning_strict_ties_choose_zero():
    q2 = np.zeros((2, 2, 2, 2))
    q1 = np.zeros((2, 2))
    regime = q_learning_regime(q2, q1)
    assert regime.d1 == (0, 0)
    assert regime.d2 == (0,) * 8


def test_q_learning_shift_invariance():
    rng = np.random.default_rng(9)
    q2 = rng.random((2, 2, 2, 2))
    q1 = rng.random((2, 2))
    base = q_learning_regime(q2, q1)
    shifted = q2 + rng.random((2, 2, 2, 1))  # constant per (y0, y1, a1) cell
    assert q_learning_regime(shifted, q1) == base


def test_q_learning_shape_validation():
    with pytest.raises(ValueError):
        q_learning_regime(np.zeros((2, 2)), np.zeros((2, 2)))


def test_equivalence_key_self():
    r = Regime((0, 1), (1, 0, 1, 0, 0, 1, 0, 1))
    assert regime_equivalence_key(r) == regime_equivalence_key(r)


def test_equivalence_key_ignores_off_path_cells(params):
    base = Regime((1, 0), (1, 1, 0, 0, 1, 0, 0, 1))
    # flip d2 at (y0=0, y1=0, a1=0): off-path because d1(0)=1
    flipped_bits = list(base.d2)
    flipped_bits[0] ^= 1
    other = Regime(base.d1, tuple(flipped_bits))
    assert regime_equivalence_key(base) == regime_equivalence_key(other)
    assert dgp.true_value(params, base) == pytest.approx(dgp.true_value(params, other), abs=1e-15)


def test_equivalence_key_count_over_boolean_class(boolean_class):
    keys = {regime_equivalence_key(r) for r in boolean_class.members}
    assert len(keys) == 64


def test_equal_keys_imply_equal_true_value(boolean_class, true_values):
    by_key = {}
    for r in boolean_class.members:
        by_key.setdefault(regime_equivalence_key(r), []).append(true_values[(r.d1, r.d2)])
    for values in by_key.values():
        assert max(values) - min(values) <= 1e-12
