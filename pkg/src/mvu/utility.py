"""Consumption utility functions, their marginals and inverse marginals.

Three analytic families are provided (:class:`LogUtility`,
:class:`PowerUtility`, :class:`ExponentialUtility`) together with
:class:`CustomUtility`, which wraps arbitrary callables and falls back on a
bracketing root search when no inverse marginal is supplied.

The analytic families also implement ``inverse_marginal_from_log``, which
takes ``ln v`` instead of ``v``.  Optimal consumption is always of the form
``[U']^{-1}(exp(something))``, and working in log space avoids the
``log(exp(x))`` round-off that otherwise dominates near the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidParameter, NoConvergence

__all__ = [
    "UtilityModel",
    "LogUtility",
    "PowerUtility",
    "ExponentialUtility",
    "CustomUtility",
    "AdmissibilityReport",
    "utility_eval",
    "marginal",
    "inverse_marginal",
    "admissibility_report",
]


def _positive(c, family):
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise DomainError(f"{family} utility requires c > 0")
    return c


def _scalarize(value):
    return value.item() if isinstance(value, np.ndarray) and value.ndim == 0 else value


class UtilityModel:
    """Interface of a concave increasing utility of the consumption rate."""

    family: str = "abstract"

    def value(self, c):
        raise NotImplementedError

    def marginal(self, c):
        raise NotImplementedError

    def inverse_marginal(self, v):
        raise NotImplementedError

    def inverse_marginal_from_log(self, log_v):
        """``[U']^{-1}(exp(log_v))``; subclasses override with exact forms."""
        return self.inverse_marginal(np.exp(log_v))

    def value_at_zero(self) -> float:
        """``lim_{c -> 0+} U(c)``, possibly infinite."""
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                return float(self.value(0.0))
        except DomainError:
            return float("nan")

    def __call__(self, c):
        return self.value(c)


@dataclass(frozen=True)
class LogUtility(UtilityModel):
    """``U(c) = ln c``."""

    family: str = field(default="log", init=False)

    def value(self, c):
        return _scalarize(np.log(_positive(c, "log")))

    def marginal(self, c):
        return _scalarize(1.0 / _positive(c, "log"))

    def inverse_marginal(self, v):
        return _scalarize(1.0 / _positive(v, "marginal value"))

    def inverse_marginal_from_log(self, log_v):
        return _scalarize(np.exp(-np.asarray(log_v, dtype=float)))

    def value_at_zero(self) -> float:
        return -np.inf


@dataclass(frozen=True)
class PowerUtility(UtilityModel):
    """``U(c) = c**theta / theta`` with ``theta < 1`` and ``theta != 0``."""

    theta: float
    family: str = field(default="power", init=False)

    def __post_init__(self):
        if not (self.theta < 1.0 and self.theta != 0.0 and np.isfinite(self.theta)):
            raise InvalidParameter([("theta", self.theta, "theta < 1 and theta != 0 required")])

    def value(self, c):
        return _scalarize(_positive(c, "power") ** self.theta / self.theta)

    def marginal(self, c):
        return _scalarize(_positive(c, "power") ** (self.theta - 1.0))

    def inverse_marginal(self, v):
        return _scalarize(_positive(v, "marginal value") ** (1.0 / (self.theta - 1.0)))

    def inverse_marginal_from_log(self, log_v):
        return _scalarize(np.exp(np.asarray(log_v, dtype=float) / (self.theta - 1.0)))

    def value_at_zero(self) -> float:
        return 0.0 if self.theta > 0 else -np.inf


@dataclass(frozen=True)
class ExponentialUtility(UtilityModel):
    """``U(c) = -exp(-eta c) / eta``; defined for every real ``c``.

    The inverse marginal ``-ln(v) / eta`` is negative whenever ``v > 1``.
    """

    eta: float
    family: str = field(default="exp", init=False)

    def __post_init__(self):
        if not (self.eta > 0.0 and np.isfinite(self.eta)):
            raise InvalidParameter([("eta", self.eta, "eta > 0 required")])

    def value(self, c):
        return _scalarize(-np.exp(-self.eta * np.asarray(c, dtype=float)) / self.eta)

    def marginal(self, c):
        return _scalarize(np.exp(-self.eta * np.asarray(c, dtype=float)))

    def inverse_marginal(self, v):
        return _scalarize(-np.log(_positive(v, "marginal value")) / self.eta)

    def inverse_marginal_from_log(self, log_v):
        return _scalarize(-np.asarray(log_v, dtype=float) / self.eta)


@dataclass(frozen=True)
class CustomUtility(UtilityModel):
    """User-supplied utility.

    Parameters
    ----------
    func : callable
        ``U(c)``.
    marginal_func : callable
        ``U'(c)``; must be positive and strictly decreasing on ``c > 0``.
    inverse_func : callable, optional
        ``[U']^{-1}(v)``.  When omitted the inverse is found by bisection.
    lower : float
        Smallest admissible consumption rate for the root search.
    """

    func: Callable[[float], float]
    marginal_func: Callable[[float], float]
    inverse_func: Optional[Callable[[float], float]] = None
    lower: float = 0.0
    rtol: float = 1e-12
    max_expansions: int = 200
    family: str = field(default="custom", init=False)

    def value(self, c):
        return _scalarize(np.vectorize(self.func, otypes=[float])(c))

    def marginal(self, c):
        return _scalarize(np.vectorize(self.marginal_func, otypes=[float])(c))

    def inverse_marginal(self, v):
        v = _positive(v, "marginal value")
        solve = self.inverse_func if self.inverse_func is not None else self._solve
        return _scalarize(np.vectorize(solve, otypes=[float])(v))

    def _solve(self, v):
        # marginal strictly decreasing: expand geometrically from c = 1 until
        # the bracket [lo, hi] satisfies marginal(lo) > v > marginal(hi)
        lo = hi = 1.0
        g = self.marginal_func
        for _ in range(self.max_expansions):
            if g(hi) <= v:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise NoConvergence(f"could not bracket marginal = {v!r} from above")
        for _ in range(self.max_expansions):
            if g(lo) >= v:
                break
            hi, lo = lo, self.lower + (lo - self.lower) / 2.0
        else:
            raise NoConvergence(f"could not bracket marginal = {v!r} from below")
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if g(mid) > v:
                lo = mid
            else:
                hi = mid
            if hi - lo <= self.rtol * 0.25 * abs(mid):
                break
        return 0.5 * (lo + hi)


def utility_eval(U: UtilityModel, c):
    return U.value(c)


def marginal(U: UtilityModel, c):
    return U.marginal(c)


def inverse_marginal(U: UtilityModel, v):
    return U.inverse_marginal(v)


@dataclass(frozen=True)
class AdmissibilityReport:
    increasing: bool
    concave: bool
    u0_finite: bool
    u0_value: Optional[float]
    u0_is_zero: Optional[bool]
    notes: tuple

    @property
    def admissible(self) -> bool:
        return self.increasing and self.concave


def admissibility_report(U: UtilityModel, grid) -> AdmissibilityReport:
    """Check monotonicity, concavity and the ``U(0) = 0`` normalisation.

    The normalisation is reported, never enforced: the log and exponential
    families violate it.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("grid needs at least 3 points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    notes = []
    values = np.asarray(U.value(grid), dtype=float)
    increasing = bool(np.all(np.diff(values) > 0))
    # divided second differences handle non-uniform grids
    slopes = np.diff(values) / np.diff(grid)
    concave = bool(np.all(np.diff(slopes) <= 1e-12 * np.maximum(1.0, np.abs(slopes[1:]))))
    if not increasing:
        notes.append("utility is not increasing on the grid")
    if not concave:
        notes.append("utility is not concave on the grid")
    u0 = U.value_at_zero()
    if np.isfinite(u0):
        u0_is_zero = abs(u0) <= 1e-14
        if not u0_is_zero:
            notes.append(f"U(0) = {u0!r} != 0")
        return AdmissibilityReport(increasing, concave, True, u0, u0_is_zero, tuple(notes))
    notes.append("U(0) is not finite")
    return AdmissibilityReport(increasing, concave, False, None, None, tuple(notes))
