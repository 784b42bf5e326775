import math

import numpy as np
import pytest

from mvu import (
    Continuation,
    IncomeSchedule,
    Perturbation,
    SimConfig,
    audit_report,
    baseline_spec,
    build_coefficients,
    consumption_star,
    equilibrium_gap,
    equilibrium_policy,
    estimate_objective,
    investment_star,
    perturbed_objective,
    propagate_moments,
    spliced_policy,
    value_function,
)
from mvu.audit import DEFAULT_DEVIATIONS, audit_mode


def star(spec, t, x):
    return float(consumption_star(spec, t)), float(investment_star(spec, t, x))


# ---- moment propagation ------------------------------------------------------

def test_moments_deterministic_growth(p0):
    m1, m2 = propagate_moments(p0, 1.0, 2.0, 0.0, 0.0, 0.5)
    assert m1 == pytest.approx(2.0 * math.exp(0.005), rel=1e-14)
    assert m2 == pytest.approx(m1 * m1, rel=1e-13)


def test_moments_constant_outflow():
    spec = baseline_spec(income=IncomeSchedule(((0.0, 0.1),)))
    kappa = 0.4 - 0.1
    m1, _ = propagate_moments(spec, 0.0, 1.0, 0.4, 0.0, 2.0)
    assert m1 == pytest.approx(math.exp(0.02) - kappa / 0.01 * (math.exp(0.02) - 1), rel=1e-13)


def test_moments_all_stock(p0):
    _, m2 = propagate_moments(p0, 0.0, 1.0, 0.0, 1.0, 1.0)
    assert m2 == pytest.approx(math.exp(0.14), rel=1e-13)
    assert round(m2, 6) == 1.150274


def test_window_past_horizon(p0):
    with pytest.raises(ValueError):
        propagate_moments(p0, 9.9, 1.0, 0.0, 0.0, 0.2)
    with pytest.raises(ValueError):
        Perturbation(0.0, 1.0, 1.0, 1.0, 0.0)


# ---- perturbed objective and gap ---------------------------------------------

def test_no_deviation_recovers_value(p0, p0_coeffs):
    c, pi = star(p0, 0.0, 1.0)
    v = perturbed_objective(p0, p0_coeffs, Perturbation(0.0, 1.0, c, pi, 1e-3))
    assert abs(v - value_function(p0, p0_coeffs, 0.0, 1.0)) <= 1e-4
    assert abs(equilibrium_gap(p0, p0_coeffs, Perturbation(0.0, 1.0, c, pi, 1e-3))) <= 1e-3


@pytest.mark.parametrize("dc, dpi", [(0.5, 0.0), (0.0, 1.0), (0.0, -0.5)])
def test_deviation_lowers_objective(p0, p0_coeffs, dc, dpi):
    c, pi = star(p0, 0.0, 1.0)
    v = perturbed_objective(p0, p0_coeffs, Perturbation(0.0, 1.0, c + dc, pi + dpi, 0.1))
    assert v < value_function(p0, p0_coeffs, 0.0, 1.0)


@pytest.mark.parametrize("dc, dpi", [(0.5, 0.0), (0.0, -0.5)])
def test_gap_positive_with_positive_limit(p0, p0_coeffs, dc, dpi):
    c, pi = star(p0, 0.0, 1.0)
    hs = np.array([0.2, 0.1, 0.05, 0.01])
    gaps = np.array([equilibrium_gap(p0, p0_coeffs, Perturbation(0.0, 1.0, c + dc, pi + dpi, h)) for h in hs])
    assert np.all(gaps > 0)
    slope, intercept = np.polyfit(hs, gaps, 1)
    assert intercept > 0
    assert np.all(np.abs(gaps - (slope * hs + intercept)) < 0.05 * intercept)


def test_zero_deviation_gap_is_order_h(p0, p0_coeffs):
    c, pi = star(p0, 2.0, 1.0)
    hs = np.array([0.2, 0.1, 0.05, 0.01])
    gaps = np.array([equilibrium_gap(p0, p0_coeffs, Perturbation(2.0, 1.0, c, pi, h)) for h in hs])
    C = float(np.dot(hs, gaps) / np.dot(hs, hs))
    assert np.isfinite(C) and C > 0
    assert np.all(np.abs(gaps) <= 2 * C * hs)


@pytest.mark.parametrize("control", ["c", "pi"])
def test_gap_quadratic_in_deviation_size(p0, p0_coeffs, control):
    t, x, h, eps = 2.0, 1.0, 0.01, 0.05
    c, pi = star(p0, t, x)

    def gap(e):
        cc, pp = (c * (1 + e), pi) if control == "c" else (c, pi + e)
        return equilibrium_gap(p0, p0_coeffs, Perturbation(t, x, cc, pp, h))

    base = gap(0.0)
    ratio = (gap(2 * eps) - base) / (gap(eps) - base)
    assert 3.5 <= ratio <= 4.5


def test_independent_continuation_agrees_with_table(p0, p0_coeffs):
    cont = Continuation.from_policy(p0, equilibrium_policy(p0))
    for s in (0.0, 3.3, 9.0):
        assert cont.b(s) == pytest.approx(p0_coeffs.b_at(s), abs=1e-10)
        assert cont.var(s) == pytest.approx(0.04 * (10 - s), abs=1e-10)
        assert cont.q(s) == pytest.approx(p0_coeffs.q_at(s), abs=1e-10)
        assert cont.value(s, 1.3) == pytest.approx(value_function(p0, p0_coeffs, s, 1.3), abs=1e-9)


def test_continuation_requires_dollar_amount(p0):
    pol = spliced_policy(equilibrium_policy(p0), 0.0, 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        Continuation.from_policy(p0, pol)


def test_spliced_policy(p0):
    base = equilibrium_policy(p0)
    pol = spliced_policy(base, 1.0, 0.5, 0.3, 2.0)
    assert pol.consumption(1.2) == 0.3 and pol.consumption(1.5) == base.consumption(1.5)
    np.testing.assert_array_equal(pol.investment(1.0, np.ones(3)), [2.0, 2.0, 2.0])
    assert pol.investment(0.9, 1.0) == base.investment(0.9, 1.0)


@pytest.mark.slow
def test_monte_carlo_cross_check_of_spliced_policy(p0, p0_coeffs):
    c, pi = star(p0, 0.0, 1.0)
    base = equilibrium_policy(p0)
    cfg = SimConfig(n_paths=200_000, dt=0.01, seed=21)
    for c_scale, dpi in DEFAULT_DEVIATIONS:
        pert = Perturbation(0.0, 1.0, c * c_scale, pi + dpi, 0.1)
        exact = perturbed_objective(p0, p0_coeffs, pert)
        value, se = estimate_objective(p0, spliced_policy(base, 0.0, 0.1, pert.c, pert.pi), cfg)
        assert abs(value - exact) <= 3 * se, (c_scale, dpi, value, exact, se)


# ---- report -------------------------------------------------------------------

def test_small_audit_passes_both_modes(p0, p0_coeffs):
    rep = audit_report(p0, p0_coeffs, t_list=[0.0, 5.0], x_list=[1.0], h_list=(0.1, 0.01))
    assert rep.verdict == "pass" and rep.failing_modes == ()
    a, b = rep.modes["paper_literal"], rep.modes["foc_derived"]
    assert a.min_gap >= -1e-6 and a.strictly_positive
    # modes coincide when rho = delta = 0
    assert a.as_dict() == {**b.as_dict(), "mode": "paper_literal"}
    assert any("falsification" in n for n in rep.notes)


def test_empty_deviation_grid(p0, p0_coeffs):
    m = audit_mode(p0, [0.0], [1.0], deviation_grid=(), coeffs=p0_coeffs)
    assert m.verdict == "pass" and m.min_gap is None and m.notes


def test_doubled_investment_is_rejected(p0):
    rep = audit_report(p0, t_list=[0.0, 4.0], x_list=[1.0], h_list=(0.1,), investment_scale=2.0)
    assert rep.verdict == "fail"
    assert rep.modes["paper_literal"].min_gap < -1e-3


def test_literal_consumption_fails_audit_under_utility_discounting():
    spec = baseline_spec(rho=0.05)
    rep = audit_report(spec, h_list=(0.1, 0.01))
    assert rep.failing_modes == ("paper_literal",)
    assert rep.modes["foc_derived"].verdict == "pass"
