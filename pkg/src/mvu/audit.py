"""Perturbation audit of the equilibrium property.

A candidate policy is an equilibrium if no constant deviation ``(c, pi)``
applied on ``[t, t + h)``, followed by the candidate afterwards, improves the
objective at first order in ``h``.  The objective of the spliced strategy is
evaluated without sampling: the first two moments of wealth at ``t + h``
are propagated through the linear moment ODEs, and the continuation values
after ``t + h`` are affine (mean) and quadratic (second moment) in wealth.

A finite grid of deviations can falsify the equilibrium property but never
prove it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .closed_form import (
    CoefficientTable,
    build_coefficients,
    consumption_star,
    dollar_amount_star,
    equilibrium_policy,
    terminal_variance,
    value_function,
)
from .problem import ConsumptionMode, Policy, ProblemSpec, objective_of_triple

__all__ = [
    "Perturbation",
    "Continuation",
    "propagate_moments",
    "perturbed_objective",
    "equilibrium_gap",
    "spliced_policy",
    "DEFAULT_DEVIATIONS",
    "AuditEntry",
    "ModeAudit",
    "AuditReport",
    "audit_mode",
    "audit_report",
]

DEFAULT_DEVIATIONS: Tuple[Tuple[float, float], ...] = tuple(
    itertools.product((0.5, 1.0, 1.5), (-1.0, 0.0, 1.0))
)
"""``(consumption multiplier, investment offset)`` pairs around the candidate."""

AUDIT_TOL = 1e-6


@dataclass(frozen=True)
class Perturbation:
    t: float
    x: float
    c: float
    pi: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("perturbation window h must be positive")


def propagate_moments(spec: ProblemSpec, t, x, c, pi, h, substeps: int = 64):
    """First and second moments of wealth at ``t + h`` under constant ``(c, pi)``.

    Integrates ``m1' = k m1 + l - c`` and ``m2' = (2k + pi^2 sigma^2) m2 +
    2 (l - c) m1`` with ``k = r + pi (mu - r)`` by RK4.
    """
    if t + h > spec.T * (1 + 1e-12):
        raise ValueError("perturbation window extends past the horizon")
    m = spec.market
    k = m.r + pi * (m.mu - m.r)
    k2 = 2.0 * k + (pi * m.sigma) ** 2
    n = max(int(substeps), 64)
    dt = h / n

    def f(s, y):
        cash = spec.income_rate(min(s, spec.T)) - c
        return np.array([k * y[0] + cash, k2 * y[1] + 2.0 * cash * y[0]])

    y = np.array([float(x), float(x) * float(x)])
    s = float(t)
    for _ in range(n):
        k1 = f(s, y)
        k2_ = f(s + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt, y + 0.5 * dt * k2_)
        k4 = f(s + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2_ + 2.0 * k3 + k4)
        s += dt
    return float(y[0]), float(y[1])


@dataclass(frozen=True)
class Continuation:
    """Mean coefficients, variance and accumulated utility of a candidate policy.

    ``y(s, x) = a(s) x + b(s)``, ``z(s, x) = var(s) + y(s, x)^2`` and
    ``w(s) = q(s)``.  Built either from the closed-form coefficient table or,
    for policies with deterministic consumption and a wealth-independent
    stock position, by an independent backward sweep of the moment ODEs.
    """

    spec: ProblemSpec
    a: callable
    b: callable
    var: callable
    q: callable
    label: str = "equilibrium"
    coeffs: Optional[CoefficientTable] = None

    @classmethod
    def from_coefficients(cls, spec: ProblemSpec, coeffs: CoefficientTable) -> "Continuation":
        return cls(spec, coeffs.a_at, coeffs.b_at, lambda s: terminal_variance(spec, coeffs, s),
                   coeffs.q_at, "equilibrium", coeffs)

    @classmethod
    def from_policy(cls, spec: ProblemSpec, policy: Policy, n: int = 2000) -> "Continuation":
        """Sweep ``b' = -[(mu-r) u + l - c] a + delta b``,
        ``var' = -sigma^2 u^2 a^2 + 2 delta var`` and ``q' = -e^{-rho s} U(c)``
        backward from ``T`` for a policy whose stock position ``u`` is
        wealth-independent."""
        if policy.dollar_amount is None:
            raise ValueError("policy must expose a wealth-independent dollar_amount")
        m, p = spec.market, spec.prefs
        T = spec.T
        t = np.linspace(0.0, T, n + 1)
        h = T / n

        def rhs(s, y):
            a = np.exp((m.r - p.delta) * (T - s))
            u = np.asarray(policy.dollar_amount(s), dtype=float)
            c = np.asarray(policy.consumption(s), dtype=float)
            l = np.asarray(spec.income_rate(np.clip(s, 0.0, T)), dtype=float)
            du = 0.0 if p.beta == 0.0 else np.exp(-p.rho * s) * np.asarray(spec.utility.value(c), dtype=float)
            return np.array([-((m.mu - m.r) * u + l - c) * a + p.delta * y[0],
                             -(m.sigma * u * a) ** 2 + 2.0 * p.delta * y[1],
                             -du], dtype=float)

        ys = np.zeros((n + 1, 3))
        y = np.zeros(3)
        for i in range(n - 1, -1, -1):
            s = t[i + 1]
            k1 = rhs(s, y)
            k2 = rhs(s - 0.5 * h, y - 0.5 * h * k1)
            k3 = rhs(s - 0.5 * h, y - 0.5 * h * k2)
            k4 = rhs(s - h, y - h * k3)
            y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ys[i] = y
        d = np.array([rhs(s, ys[i]) for i, s in enumerate(t)])
        splines = [CubicHermiteSpline(t, ys[:, j], d[:, j]) for j in range(3)]

        def a_fn(s):
            return np.exp((m.r - p.delta) * (T - np.asarray(s, dtype=float)))

        def ev(j):
            return lambda s: float(splines[j](s)) if np.ndim(s) == 0 else splines[j](s)

        return cls(spec, a_fn, ev(0), ev(1), ev(2), policy.label)

    def value(self, t, x):
        """Objective of following the candidate from ``(t, x)`` onward."""
        if self.coeffs is not None:
            return value_function(self.spec, self.coeffs, t, x)
        y = self.a(t) * x + self.b(t)
        return objective_of_triple(y, self.var(t) + y * y, self.q(t), self.spec.prefs, tol=np.inf)


def _as_continuation(spec, cont):
    if isinstance(cont, Continuation):
        return cont
    return Continuation.from_coefficients(spec, cont)


def perturbed_objective(spec: ProblemSpec, coeffs, pert: Perturbation) -> float:
    """Objective at ``(pert.t, pert.x)`` of the strategy that plays
    ``(pert.c, pert.pi)`` on ``[t, t + h)`` and the candidate afterwards.

    ``coeffs`` is a :class:`CoefficientTable` (equilibrium candidate) or a
    :class:`Continuation`.
    """
    cont = _as_continuation(spec, coeffs)
    t, h = pert.t, pert.h
    p = spec.prefs
    m1, m2 = propagate_moments(spec, t, pert.x, pert.c, pert.pi, h)
    s = t + h
    a, b = float(cont.a(s)), float(cont.b(s))
    y = np.exp(-p.delta * h) * (a * m1 + b)
    z = np.exp(-2.0 * p.delta * h) * (float(cont.var(s)) + a * a * m2 + 2.0 * a * b * m1 + b * b)
    if p.beta == 0.0:
        w = 0.0
    else:
        u = float(spec.utility.value(pert.c))
        window = h if p.rho == 0.0 else (np.exp(-p.rho * t) - np.exp(-p.rho * s)) / p.rho
        w = u * window + float(cont.q(s))
    return float(objective_of_triple(y, z, w, p, tol=1e-9))


def equilibrium_gap(spec: ProblemSpec, coeffs, pert: Perturbation) -> float:
    """``[V(t, x) - perturbed objective] / h``; non-negative at an equilibrium."""
    cont = _as_continuation(spec, coeffs)
    return (float(cont.value(pert.t, pert.x)) - perturbed_objective(spec, cont, pert)) / pert.h


def spliced_policy(base: Policy, t: float, h: float, c: float, pi: float) -> Policy:
    """``(c, pi)`` on ``[t, t + h)``, ``base`` elsewhere."""
    end = t + h

    def consumption(s):
        s = np.asarray(s, dtype=float)
        inside = (s >= t) & (s < end)
        out = np.where(inside, c, np.asarray(base.consumption(s), dtype=float))
        return out.item() if out.ndim == 0 else out

    def investment(s, x):
        if t <= s < end:
            return np.full(np.shape(x), pi, dtype=float)
        return base.investment(s, x)

    return Policy(consumption, investment, None, f"spliced({base.label})")


@dataclass(frozen=True)
class AuditEntry:
    t: float
    x: float
    c: float
    pi: float
    h: float
    gap: float
    trivial: bool


@dataclass(frozen=True)
class ModeAudit:
    mode: str
    verdict: str
    min_gap: Optional[float]
    min_location: Optional[dict]
    min_nontrivial_gap: Optional[float]
    strictly_positive: Optional[bool]
    entries: Tuple[AuditEntry, ...]
    notes: Tuple[str, ...] = ()

    def as_dict(self, include_entries: bool = False) -> dict:
        out = {
            "mode": self.mode,
            "verdict": self.verdict,
            "min_gap": self.min_gap,
            "min_location": self.min_location,
            "min_nontrivial_gap": self.min_nontrivial_gap,
            "strictly_positive": self.strictly_positive,
            "n_evaluations": len(self.entries),
            "notes": list(self.notes),
        }
        if include_entries:
            out["entries"] = [e.__dict__ for e in self.entries]
        return out


@dataclass(frozen=True)
class AuditReport:
    configured_mode: str
    verdict: str
    tol: float
    modes: Dict[str, ModeAudit]
    failing_modes: Tuple[str, ...]
    notes: Tuple[str, ...] = field(default=(
        "finite-grid falsification harness: a pass does not prove the equilibrium property",
    ))

    def as_dict(self, include_entries: bool = False) -> dict:
        return {
            "configured_mode": self.configured_mode,
            "verdict": self.verdict,
            "tol": self.tol,
            "failing_modes": list(self.failing_modes),
            "modes": {k: v.as_dict(include_entries) for k, v in self.modes.items()},
            "notes": list(self.notes),
        }


STRICT_GAP = 1e-4


def audit_mode(spec: ProblemSpec, t_list, x_list, deviation_grid=DEFAULT_DEVIATIONS,
               h_list=(0.2, 0.1, 0.05, 0.01), tol: float = AUDIT_TOL, n: int = 2000,
               investment_scale: float = 1.0, coeffs: Optional[CoefficientTable] = None) -> ModeAudit:
    """Sweep the deviation grid for ``spec`` as configured (one consumption mode)."""
    mode = spec.consumption_mode.value
    notes = []
    if investment_scale == 1.0:
        tab = coeffs if coeffs is not None else build_coefficients(spec, n)
        cont = Continuation.from_coefficients(spec, tab)
    else:
        cont = Continuation.from_policy(spec, equilibrium_policy(spec, investment_scale), n)
        notes.append(f"candidate investment scaled by {investment_scale:g} (falsification control)")
    if len(tuple(deviation_grid)) == 0:
        notes.append("empty deviation grid: nothing to test")
        return ModeAudit(mode, "pass", None, None, None, None, (), tuple(notes))

    entries: List[AuditEntry] = []
    for t in t_list:
        c_star = float(consumption_star(spec, t))
        u_star = investment_scale * float(dollar_amount_star(spec, t))
        for x in x_list:
            pi_star = u_star / x
            for c_scale, pi_shift in deviation_grid:
                c = max(c_star * c_scale, 0.0)
                pi = pi_star + pi_shift
                trivial = c_scale == 1.0 and pi_shift == 0.0
                for h in h_list:
                    if t + h > spec.T:
                        continue
                    gap = equilibrium_gap(spec, cont, Perturbation(t, x, c, pi, h))
                    entries.append(AuditEntry(float(t), float(x), c, pi, float(h), gap, trivial))
    gaps = np.array([e.gap for e in entries])
    i_min = int(np.argmin(gaps))
    worst = entries[i_min]
    nontrivial = [e.gap for e in entries if not e.trivial]
    min_nt = float(min(nontrivial)) if nontrivial else None
    verdict = "pass" if gaps[i_min] >= -tol else "fail"
    return ModeAudit(
        mode, verdict, float(gaps[i_min]),
        {"t": worst.t, "x": worst.x, "c": worst.c, "pi": worst.pi, "h": worst.h},
        min_nt, None if min_nt is None else bool(min_nt >= STRICT_GAP),
        tuple(entries), tuple(notes),
    )


def audit_report(spec: ProblemSpec, coeffs: Optional[CoefficientTable] = None, t_list=None, x_list=None,
                 deviation_grid=DEFAULT_DEVIATIONS, h_list=(0.2, 0.1, 0.05, 0.01), tol: float = AUDIT_TOL,
                 n: int = 2000, investment_scale: float = 1.0) -> AuditReport:
    """Run the audit under both consumption modes.

    Defaults: ``t`` in ``{0, T/5, ..., 4T/5}``, ``x`` in ``{x0/2, x0, 2 x0}``.
    ``coeffs``, when given, is reused for the configured mode.
    """
    if t_list is None:
        t_list = np.linspace(0.0, spec.T, 6)[:-1].tolist()
    if x_list is None:
        x_list = [spec.x0 / 2, spec.x0, 2 * spec.x0]
    modes = {}
    for mode in ConsumptionMode:
        s = spec.replace(consumption_mode=mode)
        reuse = coeffs if (coeffs is not None and mode is spec.consumption_mode) else None
        modes[mode.value] = audit_mode(s, t_list, x_list, deviation_grid, h_list, tol, n,
                                       investment_scale, reuse)
    failing = tuple(k for k, v in modes.items() if v.verdict == "fail")
    configured = spec.consumption_mode.value
    return AuditReport(configured, modes[configured].verdict, tol, modes, failing)
