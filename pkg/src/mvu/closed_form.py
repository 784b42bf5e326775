"""Closed-form equilibrium strategy, value function and terminal moments.

The value function and the first two moments of discounted terminal wealth
are affine/quadratic in wealth,

    F(t, x)   = A(t) x + B(t)                 (value)
    F1(t, x)  = a(t) x + b(t)                 (conditional mean)
    F3(t, x)  = p(t) x + q(t)                 (accumulated utility)
    Var(t)    = (2/gamma) [b - B + beta (p x + q)],

with ``A = a = exp((r - delta)(T - t))`` and ``p = 0``.  The remaining
coefficients ``b, B, q`` solve a linear terminal-value ODE system which is
integrated backward from ``T`` with classical RK4 on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .errors import GridTooCoarse, NegativeVariance, UtilityMismatch, ZeroWealth
from .problem import ConsumptionMode, Policy, ProblemSpec
from .utility import LogUtility

__all__ = [
    "CoefficientTable",
    "EquilibriumSolution",
    "Sensitivity",
    "MIN_GRID",
    "log_marginal_level",
    "consumption_star",
    "investment_star",
    "dollar_amount_star",
    "equilibrium_policy",
    "build_coefficients",
    "solve",
    "value_function",
    "terminal_mean",
    "terminal_variance",
    "terminal_second_moment",
    "accumulated_utility",
    "coefficient_rhs",
    "sensitivity_beta",
]

MIN_GRID = 100


def _out(arr):
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr


def log_marginal_level(spec: ProblemSpec, t):
    """``ln`` of the marginal-utility level at which optimal consumption sits."""
    t = np.asarray(t, dtype=float)
    r, T = spec.market.r, spec.T
    p = spec.prefs
    if spec.consumption_mode is ConsumptionMode.PAPER_LITERAL:
        return -np.log(p.beta) + r * (T - t) - p.delta * T
    return -np.log(p.beta) + p.rho * t + (r - p.delta) * (T - t)


def consumption_star(spec: ProblemSpec, t):
    """Equilibrium consumption rate; wealth-independent.

    ``beta = 0`` is the degenerate classical mean-variance problem and returns
    zero consumption.  Negative rates (possible for exponential utility) are
    clamped at zero only when ``spec.clamp_consumption`` is set.
    """
    t = np.asarray(t, dtype=float)
    if spec.prefs.beta == 0.0:
        return _out(np.zeros_like(t))
    c = np.asarray(spec.utility.inverse_marginal_from_log(log_marginal_level(spec, t)), dtype=float)
    if spec.clamp_consumption:
        c = np.maximum(c, 0.0)
    return _out(c)


def dollar_amount_star(spec: ProblemSpec, t):
    """Wealth-independent amount ``pi* x`` held in the stock."""
    m, p = spec.market, spec.prefs
    t = np.asarray(t, dtype=float)
    return _out(m.excess_return / (p.gamma * m.sigma**2) * np.exp(-(m.r - p.delta) * (spec.T - t)))


def investment_star(spec: ProblemSpec, t, x):
    """Equilibrium fraction of wealth in the stock.  Independent of beta."""
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ZeroWealth("investment fraction undefined at zero wealth")
    return _out(np.asarray(dollar_amount_star(spec, t)) / x)


def equilibrium_policy(spec: ProblemSpec, investment_scale: float = 1.0) -> Policy:
    """The equilibrium ``(c*, pi*)`` as a :class:`Policy`.

    ``investment_scale`` multiplies the stock position; values other than 1
    give a deliberately wrong policy used as a falsification control.
    """
    k = float(investment_scale)
    if k == 1.0:
        def u(t):
            return dollar_amount_star(spec, t)
    else:
        def u(t):
            return k * np.asarray(dollar_amount_star(spec, t))

    def investment(t, x):
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise ZeroWealth("investment fraction undefined at zero wealth")
        return np.asarray(u(t)) / x

    label = "equilibrium" if k == 1.0 else f"equilibrium(pi x {k:g})"
    return Policy(lambda t: consumption_star(spec, t), investment, u, label)


@dataclass(frozen=True)
class CoefficientTable:
    """Coefficients ``A, a, b, B, p, q`` tabulated on ``t = linspace(0, T, n+1)``.

    ``db, dB, dq`` hold the ODE right-hand sides at the nodes; they feed the
    cubic Hermite interpolants used between nodes.
    """

    spec: ProblemSpec
    t: np.ndarray
    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    B: np.ndarray
    p: np.ndarray
    q: np.ndarray
    db: np.ndarray
    dB: np.ndarray
    dq: np.ndarray
    c: np.ndarray
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        splines = {
            name: CubicHermiteSpline(self.t, getattr(self, name), getattr(self, "d" + name))
            for name in ("b", "B", "q")
        }
        object.__setattr__(self, "_splines", splines)

    @property
    def n(self) -> int:
        return self.t.size - 1

    @property
    def dt(self) -> float:
        return self.spec.T / self.n

    def _interp(self, name, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self._splines[name](t), dtype=float)
        # exact node values where t sits on the grid
        k = np.rint(t / self.dt)
        on_node = (np.abs(t - k * self.dt) <= 1e-12 * self.dt) & (k >= 0) & (k <= self.n)
        if np.any(on_node):
            nodes = getattr(self, name)[k[on_node].astype(int)]
            out = np.array(out, copy=True)
            out[on_node] = nodes
        return _out(out)

    def A_at(self, t):
        m, p = self.spec.market, self.spec.prefs
        return _out(np.exp((m.r - p.delta) * (self.spec.T - np.asarray(t, dtype=float))))

    a_at = A_at

    def b_at(self, t):
        return self._interp("b", t)

    def B_at(self, t):
        return self._interp("B", t)

    def q_at(self, t):
        return self._interp("q", t)

    def p_at(self, t):
        return _out(np.zeros_like(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class EquilibriumSolution:
    spec: ProblemSpec
    coeffs: CoefficientTable
    policy: Policy


def _forcing(spec: ProblemSpec, t):
    """Consumption, income and discounted utility ``e^{-rho t} U(c*)`` at ``t``."""
    c = np.asarray(consumption_star(spec, t), dtype=float)
    if spec.prefs.beta == 0.0:
        du = np.zeros_like(c)
    else:
        du = np.exp(-spec.prefs.rho * t) * np.asarray(spec.utility.value(c), dtype=float)
    return c, du


def coefficient_rhs(spec: ProblemSpec, t, A, a, b, B, p, q, c, l, du):
    """Time derivatives ``(b', B', q')`` of the terminal-value system.

    Arguments are the coefficient values at ``t`` together with consumption
    ``c``, income ``l`` and discounted utility ``du = e^{-rho t} U(c)``.
    """
    m, pr = spec.market, spec.prefs
    ex2 = m.excess_return**2 / m.sigma**2
    g, beta, delta = pr.gamma, pr.beta, pr.delta
    db = -ex2 * A / (g * a) - l * a + c * a + delta * b
    dB = (-ex2 * A**2 / (2.0 * g * a**2) - l * A + c * A - beta * du
          + delta * b - 2.0 * delta * (b - B + beta * q))
    dq = -ex2 * A * p / (g * a**2) - l * p + c * p - du
    if beta == 0.0:
        dq = np.zeros_like(np.asarray(dq, dtype=float))
    return db, dB, dq


def build_coefficients(spec: ProblemSpec, n: int = 2000) -> CoefficientTable:
    """Tabulate the coefficient functions on ``n + 1`` uniform nodes."""
    if n < MIN_GRID:
        raise GridTooCoarse(f"coefficient grid n={n} below minimum {MIN_GRID}")
    T = spec.T
    t = np.linspace(0.0, T, n + 1)
    h = T / n
    mid = t[:-1] + 0.5 * h
    A = np.exp((spec.market.r - spec.prefs.delta) * (T - t))
    A_mid = np.exp((spec.market.r - spec.prefs.delta) * (T - mid))
    c, du = _forcing(spec, t)
    c_mid, du_mid = _forcing(spec, mid)
    l_nodes = np.asarray(spec.income_rate(t), dtype=float)
    # income is constant on each step when breakpoints sit on the grid
    l_step = np.asarray(spec.income_rate(mid), dtype=float)

    b = np.zeros(n + 1)
    B = np.zeros(n + 1)
    q = np.zeros(n + 1)
    y = np.zeros(3)

    def f(stage_A, stage_c, stage_du, l, state):
        return np.array(coefficient_rhs(spec, None, stage_A, stage_A, state[0], state[1], 0.0, state[2],
                                        stage_c, l, stage_du))

    for i in range(n - 1, -1, -1):
        l = l_step[i]
        k1 = f(A[i + 1], c[i + 1], du[i + 1], l, y)
        k2 = f(A_mid[i], c_mid[i], du_mid[i], l, y - 0.5 * h * k1)
        k3 = f(A_mid[i], c_mid[i], du_mid[i], l, y - 0.5 * h * k2)
        k4 = f(A[i], c[i], du[i], l, y - h * k3)
        y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        b[i], B[i], q[i] = y

    db, dB, dq = coefficient_rhs(spec, t, A, A, b, B, 0.0, q, c, l_nodes, du)
    warnings = []
    if spec.prefs.beta == 0.0:
        warnings.append("beta = 0: degenerate classical mean-variance mode, consumption forced to 0")
    if spec.clamp_consumption:
        raw = np.asarray(spec.utility.inverse_marginal_from_log(log_marginal_level(spec, t))) if spec.prefs.beta > 0 else c
        n_clamped = int(np.sum(np.asarray(raw) < 0))
        if n_clamped:
            warnings.append(f"consumption clamped at 0 on {n_clamped} of {n + 1} grid nodes")
    if not np.all(np.isfinite(B)):
        warnings.append("non-finite coefficients (utility undefined at the consumption rate?)")
    return CoefficientTable(spec, t, A, A.copy(), b, B, np.zeros(n + 1), q,
                            np.asarray(db, dtype=float), np.asarray(dB, dtype=float),
                            np.asarray(dq, dtype=float), c, tuple(warnings))


def solve(spec: ProblemSpec, n: int = 2000) -> EquilibriumSolution:
    coeffs = build_coefficients(spec, n)
    return EquilibriumSolution(spec, coeffs, equilibrium_policy(spec))


def value_function(spec: ProblemSpec, coeffs: CoefficientTable, t, x):
    x = np.asarray(x, dtype=float)
    return _out(np.asarray(coeffs.A_at(t)) * x + np.asarray(coeffs.B_at(t)))


def terminal_mean(spec: ProblemSpec, coeffs: CoefficientTable, t, x):
    """``E[e^{-delta(T-t)} X(T) | X(t) = x]`` under the equilibrium policy."""
    x = np.asarray(x, dtype=float)
    return _out(np.asarray(coeffs.a_at(t)) * x + np.asarray(coeffs.b_at(t)))


def terminal_variance(spec: ProblemSpec, coeffs: CoefficientTable, t, x=None, tol: float = 1e-10):
    """Conditional variance of discounted terminal wealth; wealth-independent."""
    b, B, q = (np.asarray(coeffs.b_at(t)), np.asarray(coeffs.B_at(t)), np.asarray(coeffs.q_at(t)))
    px = 0.0 if x is None else np.asarray(coeffs.p_at(t)) * np.asarray(x, dtype=float)
    beta = spec.prefs.beta
    var = (2.0 / spec.prefs.gamma) * (b - B + (beta * (px + q) if beta else 0.0))
    if np.any(var < -tol * np.maximum(1.0, np.abs(B))):
        raise NegativeVariance(f"terminal variance {np.min(var)!r} < 0")
    if x is not None:
        var = np.broadcast_to(var, np.broadcast(var, np.asarray(x)).shape)
    return _out(var)


def terminal_second_moment(spec: ProblemSpec, coeffs: CoefficientTable, t, x):
    mean = np.asarray(terminal_mean(spec, coeffs, t, x))
    return _out(np.asarray(terminal_variance(spec, coeffs, t, x)) + mean**2)


def accumulated_utility(spec: ProblemSpec, coeffs: CoefficientTable, t):
    """``int_t^T e^{-rho s} U(c*(s)) ds`` (time-0 discounting)."""
    return coeffs.q_at(t)


@dataclass(frozen=True)
class Sensitivity:
    beta: float
    V: float
    dV_fd: float
    d2V_fd: float
    M_paper: float
    dV_paper: float

    @property
    def discrepancy(self) -> float:
        return self.dV_paper - self.dV_fd


def _M(spec: ProblemSpec, t: float) -> float:
    r, rho, T = spec.market.r, spec.prefs.rho, spec.T
    val, _ = quad(lambda s: np.exp(-rho * s) * (-r * (T - s) + rho * T), t, T, epsabs=1e-14, epsrel=1e-13)
    return val


def sensitivity_beta(spec: ProblemSpec, coeffs: CoefficientTable, t: float, x: float,
                     rel_step: float = 1e-4) -> Sensitivity:
    """Derivatives of ``V(t, x)`` with respect to beta, log utility only.

    Central finite differences (step ``beta * rel_step``) are authoritative;
    ``M_paper`` and ``dV_paper = M (1 + ln beta)`` are the closed-form
    diagnostic with ``M(t) = int_t^T e^{-rho s}[-r(T-s) + rho T] ds``.
    """
    if not isinstance(spec.utility, LogUtility):
        raise UtilityMismatch("beta sensitivity is derived for log utility only")
    beta = spec.prefs.beta
    if beta <= 0:
        raise UtilityMismatch("beta sensitivity requires beta > 0")
    h = beta * rel_step
    vals = []
    for bb in (beta - h, beta, beta + h):
        s = spec.replace(beta=bb)
        tab = coeffs if bb == beta else build_coefficients(s, coeffs.n)
        vals.append(value_function(s, tab, t, x))
    vm, v0, vp = vals
    M = _M(spec, t)
    return Sensitivity(beta, v0, (vp - vm) / (2 * h), (vp - 2 * v0 + vm) / h**2, M, M * (1.0 + np.log(beta)))
