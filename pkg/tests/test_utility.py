import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvu import (
    CustomUtility,
    DomainError,
    ExponentialUtility,
    InvalidParameter,
    LogUtility,
    NoConvergence,
    PowerUtility,
    admissibility_report,
    inverse_marginal,
    marginal,
    utility_eval,
)

FAMILIES = [LogUtility(), PowerUtility(0.5), PowerUtility(-1.5), PowerUtility(0.1), ExponentialUtility(3.0)]


def test_eval_examples():
    assert utility_eval(LogUtility(), 1.0) == 0.0
    assert utility_eval(PowerUtility(0.5), 4.0) == pytest.approx(4.0, rel=1e-15)
    assert utility_eval(ExponentialUtility(3.0), 0.0) == pytest.approx(-1 / 3, rel=1e-15)


def test_marginal_examples():
    assert marginal(LogUtility(), 2.0) == 0.5
    assert marginal(PowerUtility(0.5), 4.0) == pytest.approx(0.5, rel=1e-15)
    assert marginal(ExponentialUtility(1.0), 0.0) == 1.0


def test_inverse_marginal_examples():
    assert inverse_marginal(LogUtility(), 2.0) == 0.5
    assert inverse_marginal(PowerUtility(0.5), 0.5) == pytest.approx(4.0, rel=1e-14)
    assert inverse_marginal(ExponentialUtility(3.0), math.exp(-0.3)) == pytest.approx(0.1, rel=1e-14)


def test_custom_log_without_inverse():
    u = CustomUtility(math.log, lambda c: 1.0 / c)
    assert abs(inverse_marginal(u, 2.0) - 0.5) <= 1e-12
    assert abs(inverse_marginal(u, 1e-3) - 1e3) <= 1e-12 * 1e3


def test_custom_with_supplied_inverse_is_used():
    u = CustomUtility(math.log, lambda c: 1.0 / c, inverse_func=lambda v: 1.0 / v)
    assert inverse_marginal(u, 4.0) == 0.25


def test_custom_bracketing_failure():
    # constant marginal never drops below 2: no bracket exists
    u = CustomUtility(lambda c: 3.0 * c, lambda c: 3.0, max_expansions=20)
    with pytest.raises(NoConvergence):
        inverse_marginal(u, 2.0)


@pytest.mark.parametrize("U", [LogUtility(), PowerUtility(0.5)])
def test_domain_errors(U):
    with pytest.raises(DomainError):
        utility_eval(U, 0.0)
    with pytest.raises(DomainError):
        marginal(U, -1.0)
    with pytest.raises(DomainError):
        inverse_marginal(U, 0.0)


def test_exponential_accepts_negative_consumption():
    assert utility_eval(ExponentialUtility(1.0), -1.0) == pytest.approx(-math.e)
    assert inverse_marginal(ExponentialUtility(1.0), math.e) == pytest.approx(-1.0)


@pytest.mark.parametrize("theta", [1.0, 0.0, 1.5])
def test_power_parameter_validation(theta):
    with pytest.raises(InvalidParameter):
        PowerUtility(theta)


@pytest.mark.parametrize("eta", [0.0, -1.0])
def test_exponential_parameter_validation(eta):
    with pytest.raises(InvalidParameter):
        ExponentialUtility(eta)


def test_vectorized_evaluation():
    c = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(LogUtility().value(c), np.log(c))
    np.testing.assert_allclose(PowerUtility(0.5).marginal(c), c**-0.5)


@pytest.mark.parametrize("U", FAMILIES, ids=lambda u: repr(u))
def test_round_trip_random(U):
    rng = np.random.default_rng(7)
    c = rng.uniform(0.01, 20.0, 100)
    back = np.asarray(U.inverse_marginal(U.marginal(c)))
    np.testing.assert_allclose(back, c, rtol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 50.0), st.sampled_from(FAMILIES))
def test_marginal_matches_finite_difference(c, U):
    h = 1e-5 * c
    fd = (U.value(c + h) - U.value(c - h)) / (2 * h)
    assert fd == pytest.approx(U.marginal(c), rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_custom_round_trip_property(v):
    u = CustomUtility(lambda c: 2 * math.sqrt(c), lambda c: 1 / math.sqrt(c))
    assert inverse_marginal(u, v) == pytest.approx(v**-2, rel=1e-11)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.sampled_from(FAMILIES))
def test_marginal_positive_and_decreasing(step, U):
    c = np.linspace(0.1, 10.0, 50) * (1 + step)
    m = np.asarray(U.marginal(c))
    assert np.all(m > 0)
    assert np.all(np.diff(m) < 0)


def test_log_space_inverse_agrees():
    for U in FAMILIES:
        for lv in (-2.0, 0.0, 0.3, 1.7):
            assert U.inverse_marginal_from_log(lv) == pytest.approx(U.inverse_marginal(math.exp(lv)), rel=1e-13)


def test_power_inverse_diverges_as_theta_to_one():
    v = 0.5
    thetas = [0.5, 0.8, 0.9, 0.95, 0.99]
    c = [inverse_marginal(PowerUtility(th), v) for th in thetas]
    assert all(b > a for a, b in zip(c, c[1:]))
    assert c[-1] > 1e29


def test_admissibility_examples():
    rep = admissibility_report(LogUtility(), [0.5, 1, 2, 4])
    assert rep.increasing and rep.concave and not rep.u0_finite and rep.u0_is_zero is None
    rep = admissibility_report(ExponentialUtility(1.0), [0, 1, 2])
    assert rep.increasing and rep.concave
    assert rep.u0_value == -1.0 and rep.u0_is_zero is False
    assert any("U(0)" in n for n in rep.notes)
    rep = admissibility_report(CustomUtility(lambda c: c * c, lambda c: 2 * c), [1, 2, 3])
    assert rep.concave is False and not rep.admissible


def test_admissibility_power_positive_theta_normalised():
    rep = admissibility_report(PowerUtility(0.5), [0.5, 1, 2])
    assert rep.u0_value == 0.0 and rep.u0_is_zero


def test_admissibility_needs_three_points():
    with pytest.raises(ValueError):
        admissibility_report(LogUtility(), [1, 2])
