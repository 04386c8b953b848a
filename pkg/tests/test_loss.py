"""Tests for the loss families and their regularity conditions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustlowrank import loss
from robustlowrank.errors import DegenerateScaleError, InputError

import oracles

ALL_SPECS = [
    loss.least_squares(),
    loss.huber(0.1),
    loss.huber(1.0),
    loss.logistic(0.1),
    loss.logistic(1.205),
]

GRID = np.concatenate([-np.geomspace(1e-4, 50, 60)[::-1], [0.0], np.geomspace(1e-4, 50, 60)])


def test_loss_value_examples():
    assert loss.loss_value(loss.logistic(0.1), 0.0) == 0.0
    assert loss.loss_value(loss.huber(0.1), 1.0) == pytest.approx(0.095)
    assert loss.loss_value(loss.huber(0.1), 0.05) == pytest.approx(0.00125)


def test_loss_deriv_examples():
    assert loss.loss_deriv(loss.least_squares(), 3.0) == 6.0
    assert loss.loss_deriv(loss.huber(0.1), -5.0) == -0.1
    assert loss.loss_deriv(loss.logistic(0.1), 5.0) == pytest.approx(1.0, abs=1e-12)


def test_loss_second_deriv_examples():
    assert loss.loss_second_deriv(loss.least_squares(), 17.3) == 2.0
    assert loss.loss_second_deriv(loss.huber(0.1), 0.2) == 0.0
    # sech^2(0)/C = 1/C
    assert loss.loss_second_deriv(loss.logistic(0.1), 0.0) == pytest.approx(10.0)


def test_huber_kink_second_derivative_is_zero():
    assert loss.loss_second_deriv(loss.huber(0.5), 0.5) == 0.0
    assert loss.loss_second_deriv(loss.huber(0.5), -0.5) == 0.0


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.family}-{s.c}")
def test_evenness_nonnegativity_zero_only_at_zero(spec):
    vals = loss.loss_value(spec, GRID)
    neg_vals = loss.loss_value(spec, -GRID)
    np.testing.assert_allclose(vals, neg_vals, rtol=1e-12)
    assert np.all(vals >= 0)
    nonzero = GRID != 0
    assert np.all(vals[nonzero] > 0)
    assert loss.loss_value(spec, 0.0) == 0.0


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.family}-{s.c}")
def test_first_derivative_odd_nondecreasing_positive(spec):
    d = loss.loss_deriv(spec, GRID)
    np.testing.assert_allclose(d, -loss.loss_deriv(spec, -GRID), atol=1e-15)
    order = np.argsort(GRID)
    assert np.all(np.diff(d[order]) >= -1e-12)
    pos = GRID > 0
    assert np.all(d[pos] > 0)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.family}-{s.c}")
def test_second_derivative_nonnegative_nonincreasing(spec):
    pos = np.geomspace(1e-6, 50, 80)
    dd = loss.loss_second_deriv(spec, pos)
    assert np.all(dd >= 0)
    assert np.all(np.diff(dd) <= 1e-12)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.family}-{s.c}")
def test_derivative_bounds(spec):
    c0 = loss.derivative_bound(spec)
    d = loss.loss_deriv(spec, GRID)
    assert np.all(np.abs(d) <= c0 * np.abs(GRID) + 1e-12)
    assert np.all(loss.loss_second_deriv(spec, GRID) <= c0 + 1e-12)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.family}-{s.c}")
def test_deriv_matches_finite_differences(spec):
    rng = np.random.default_rng(99)
    xs = rng.uniform(-5, 5, 100)
    for x in xs:
        fd = oracles.central_difference(lambda t: loss.loss_value(spec, t), float(x))
        assert loss.loss_deriv(spec, float(x)) == pytest.approx(fd, abs=1e-6)


@given(st.floats(-30, 30), st.floats(0.05, 3.0))
@settings(max_examples=200, deadline=None)
def test_logistic_value_deriv_consistent(s, c):
    spec = loss.logistic(c)
    assert loss.loss_value(spec, s) >= 0
    assert abs(loss.loss_deriv(spec, s)) <= 1.0


def test_scale_adaptive_c_alternating_unit_residuals():
    r = np.tile([1.0, -1.0], 10)
    assert loss.scale_adaptive_c(r, 1.205) == pytest.approx(1.205 / 0.6745)


def test_scale_adaptive_c_normal_consistency():
    rng = np.random.default_rng(1)
    r = rng.standard_normal(10_000)
    assert loss.scale_adaptive_c(r, 1.205) == pytest.approx(1.205, abs=0.05)


def test_scale_adaptive_c_degenerate():
    with pytest.raises(DegenerateScaleError):
        loss.scale_adaptive_c([0.0, 0.0, 0.0])
    with pytest.raises(InputError):
        loss.scale_adaptive_c([])


def test_loss_spec_validation():
    with pytest.raises(InputError):
        loss.LossSpec("tukey", 1.0)
    with pytest.raises(InputError):
        loss.logistic(0.0)
    with pytest.raises(InputError):
        loss.huber(-1.0)
