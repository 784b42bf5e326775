"""Market, preference and horizon data model for the wealth dynamics

    dX = [(r + pi (mu - r)) X + l(t) - c(t)] dt + pi sigma X dB

and the scalar objective ``y - (gamma/2)(z - y**2) + beta w`` built from the
conditional moments of discounted terminal wealth and the accumulated
consumption utility.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameter, NegativeVariance, OutOfHorizon
from .utility import LogUtility, UtilityModel

__all__ = [
    "ConsumptionMode",
    "MarketParams",
    "Preferences",
    "IncomeSchedule",
    "ProblemSpec",
    "Policy",
    "baseline_spec",
    "validate_spec",
    "income_at",
    "drift_diffusion",
    "objective_of_triple",
]


class ConsumptionMode(str, enum.Enum):
    """Which closed form is used for the optimal consumption rate.

    ``PAPER_LITERAL`` evaluates ``[U']^{-1}(beta^{-1} e^{r(T-t) - delta T})``;
    ``FOC_DERIVED`` evaluates ``[U']^{-1}(beta^{-1} e^{rho t} A(t))``, the
    stationarity condition of the pseudo-Bellman equation.  Both agree when
    ``rho = delta = 0``.
    """

    PAPER_LITERAL = "paper_literal"
    FOC_DERIVED = "foc_derived"


@dataclass(frozen=True)
class MarketParams:
    r: float = 0.01
    mu: float = 0.05
    sigma: float = 0.2

    @property
    def excess_return(self) -> float:
        return self.mu - self.r


@dataclass(frozen=True)
class Preferences:
    gamma: float = 1.0
    beta: float = 1.0
    rho: float = 0.0
    delta: float = 0.0


@dataclass(frozen=True)
class IncomeSchedule:
    """Piecewise-constant income rate, right-continuous at breakpoints.

    ``segments`` is a sequence of ``(start_time, rate)`` pairs; the first
    start time must be 0.  An empty schedule means ``l = 0``.
    """

    segments: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((float(s), float(v)) for s, v in self.segments))

    @property
    def starts(self) -> np.ndarray:
        return np.array([s for s, _ in self.segments], dtype=float)

    @property
    def rates(self) -> np.ndarray:
        return np.array([v for _, v in self.segments], dtype=float)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for _, v in self.segments)


@dataclass(frozen=True)
class ProblemSpec:
    market: MarketParams = field(default_factory=MarketParams)
    prefs: Preferences = field(default_factory=Preferences)
    T: float = 10.0
    x0: float = 1.0
    income: IncomeSchedule = field(default_factory=IncomeSchedule)
    utility: UtilityModel = field(default_factory=LogUtility)
    consumption_mode: ConsumptionMode = ConsumptionMode.PAPER_LITERAL
    clamp_consumption: bool = False

    def __post_init__(self):
        object.__setattr__(self, "consumption_mode", ConsumptionMode(self.consumption_mode))

    def income_rate(self, t):
        return income_at(self.income, t, self.T)

    def replace(self, **changes) -> "ProblemSpec":
        """Copy with top-level fields or any market/preference field replaced."""
        market_keys = {k: changes.pop(k) for k in ("r", "mu", "sigma") if k in changes}
        pref_keys = {k: changes.pop(k) for k in ("gamma", "beta", "rho", "delta") if k in changes}
        spec = self
        if market_keys:
            spec = replace(spec, market=replace(spec.market, **market_keys))
        if pref_keys:
            spec = replace(spec, prefs=replace(spec.prefs, **pref_keys))
        return replace(spec, **changes) if changes else spec


@dataclass(frozen=True)
class Policy:
    """A consumption schedule ``c(t)`` and an investment fraction ``pi(t, x)``.

    Both callables must accept numpy arrays.  ``dollar_amount`` may be given
    when ``pi(t, x) * x`` does not depend on ``x``; simulators and the audit
    use it to avoid dividing by wealth.
    """

    consumption: Callable
    investment: Callable
    dollar_amount: Optional[Callable] = None
    label: str = "custom"


def baseline_spec(**changes) -> ProblemSpec:
    """The reference parameter set used throughout the docs and tests.

    Log utility, ``beta = gamma = 1``, ``r = 0.01``, ``mu = 0.05``,
    ``sigma = 0.2``, ``rho = delta = 0``, ``T = 10``, ``x0 = 1``, no income.
    Keyword arguments are forwarded to :meth:`ProblemSpec.replace`.
    """
    return ProblemSpec().replace(**changes) if changes else ProblemSpec()


def _check(violations, name, value, ok, constraint):
    if not (ok and math.isfinite(value)):
        violations.append((name, value, constraint))


def validate_spec(spec: ProblemSpec) -> ProblemSpec:
    """Return ``spec`` unchanged, or raise :class:`InvalidParameter` listing
    every violated constraint."""
    v = []
    m, p = spec.market, spec.prefs
    _check(v, "r", m.r, m.r > 0, "r > 0 required")
    _check(v, "sigma", m.sigma, m.sigma > 0, "sigma > 0 required")
    _check(v, "mu", m.mu, m.mu > m.r, "mu > r required")
    _check(v, "gamma", p.gamma, p.gamma > 0, "gamma > 0 required")
    _check(v, "beta", p.beta, p.beta >= 0, "beta >= 0 required")
    _check(v, "rho", p.rho, p.rho >= 0, "rho >= 0 required")
    _check(v, "delta", p.delta, p.delta >= 0, "delta >= 0 required")
    _check(v, "T", spec.T, spec.T > 0, "T > 0 required")
    _check(v, "x0", spec.x0, spec.x0 > 0, "x0 > 0 required")
    segs = spec.income.segments
    if segs:
        starts = [s for s, _ in segs]
        if starts[0] != 0.0:
            v.append(("income.segments", segs, "first segment must start at 0"))
        if any(b <= a for a, b in zip(starts, starts[1:])):
            v.append(("income.segments", segs, "segment start times must be strictly increasing"))
        if not all(math.isfinite(rate) for _, rate in segs):
            v.append(("income.segments", segs, "income rates must be finite"))
    if not isinstance(spec.utility, UtilityModel):
        v.append(("utility", spec.utility, "must be a UtilityModel"))
    if v:
        raise InvalidParameter(v)
    return spec


def income_at(schedule: IncomeSchedule, t, T: float = math.inf):
    """Income rate at time(s) ``t``; right-continuous at breakpoints."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise OutOfHorizon(f"t outside [0, {T}]")
    if not schedule.segments:
        out = np.zeros_like(t_arr)
    else:
        idx = np.searchsorted(schedule.starts, t_arr, side="right") - 1
        out = schedule.rates[np.clip(idx, 0, None)]
    return out.item() if out.ndim == 0 else out


def drift_diffusion(spec: ProblemSpec, t, x, c, pi):
    """Drift and diffusion of the wealth SDE at ``(t, x)`` under ``(c, pi)``."""
    args = [np.asarray(a, dtype=float) for a in (t, x, c, pi)]
    if not all(np.all(np.isfinite(a)) for a in args):
        raise ValueError("drift_diffusion requires finite inputs")
    t, x, c, pi = args
    m = spec.market
    drift = (m.r + pi * (m.mu - m.r)) * x + np.asarray(spec.income_rate(t)) - c
    diffusion = pi * m.sigma * x
    if drift.ndim == 0:
        return float(drift), float(diffusion)
    return drift, diffusion


def objective_of_triple(y, z, w, prefs: Preferences, tol: float = 1e-9):
    """Mean-variance-utility objective ``y - (gamma/2)(z - y^2) + beta w``.

    ``tol`` is relative to ``max(1, |z|)``.  With ``beta = 0`` the utility
    term is dropped entirely (``w`` may then be infinite).
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    var = z - y * y
    if np.any(var < -tol * np.maximum(1.0, np.abs(z))):
        raise NegativeVariance(f"z - y^2 = {np.min(var)!r} < 0")
    out = y - 0.5 * prefs.gamma * var
    if prefs.beta != 0.0:
        out = out + prefs.beta * np.asarray(w, dtype=float)
    return out.item() if out.ndim == 0 else out
