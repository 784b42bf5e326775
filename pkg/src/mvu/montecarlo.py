"""Euler-Maruyama simulation of the wealth SDE and Monte Carlo estimates of
the conditional moments ``y``, ``z`` and the accumulated utility ``w``.

Paths are simulated in fixed-size blocks.  Block ``i`` draws its normals from
``SeedSequence(seed, spawn_key=(i,))``, so the estimates depend only on
``(seed, n_paths, dt, block_size)`` and never on how many workers run the
blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFinitePath
from .problem import Policy, ProblemSpec, objective_of_triple

__all__ = [
    "SimConfig",
    "PathSample",
    "EstimateTriple",
    "simulate_paths",
    "simulate_estimates",
    "estimate_objective",
]


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 200_000
    dt: float = 0.005
    seed: int = 42
    antithetic: bool = True
    t0: float = 0.0
    x0: Optional[float] = None
    block_size: int = 8192
    workers: int = 1

    def validate(self, spec: ProblemSpec) -> "SimConfig":
        horizon = spec.T - self.t0
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("n_paths must be even for antithetic sampling")
        if self.antithetic and self.block_size % 2:
            raise ValueError("block_size must be even for antithetic sampling")
        if not (0.0 <= self.t0 < spec.T):
            raise ValueError("start time must lie in [0, T)")
        if not (0.0 < self.dt <= horizon / 10.0 * (1 + 1e-12)):
            raise ValueError(f"dt must satisfy 0 < dt <= (T - t0)/10 = {horizon / 10.0}")
        return self

    def n_steps(self, spec: ProblemSpec) -> int:
        return int(np.ceil((spec.T - self.t0) / self.dt - 1e-9))


@dataclass(frozen=True)
class PathSample:
    """Discounted terminal wealth per path plus the deterministic utility integral.

    With antithetic sampling ``y_plus[j]`` and ``y_minus[j]`` are a pair.
    """

    y_plus: np.ndarray
    y_minus: Optional[np.ndarray]
    w: float
    w_bias_bound: float
    position_sq: float
    dt: float
    n_steps: int

    @property
    def y(self) -> np.ndarray:
        if self.y_minus is None:
            return self.y_plus
        return np.concatenate([self.y_plus, self.y_minus])


@dataclass(frozen=True)
class EstimateTriple:
    """Monte Carlo estimates of ``y, z, w`` with standard errors.

    ``se_*`` are ``sample std / sqrt(n)`` over all paths.  For antithetic runs
    this ignores the negative correlation within pairs and so overstates the
    error; ``effective_se_y`` treats pair averages as the i.i.d. samples.
    ``var_hat``/``se_var`` describe ``z - y^2`` via the delta method.
    """

    y_hat: float
    z_hat: float
    w_hat: float
    se_y: float
    se_z: float
    se_w: float
    n_paths: int
    var_hat: float
    se_var: float
    effective_se_y: float
    w_bias_bound: float
    position_sq: float
    dt: float
    n_steps: int
    antithetic: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mean_std(v: np.ndarray):
    # shifting by the first sample keeps identical samples at exactly zero spread
    shift = v[0]
    d = v - shift
    m = d.mean()
    if v.size < 2:
        return shift + m, 0.0
    return shift + m, float(np.sqrt(np.sum((d - m) ** 2) / (v.size - 1)))


def _block_ranges(n_paths: int, block_size: int):
    return [(lo, min(lo + block_size, n_paths)) for lo in range(0, n_paths, block_size)]


def simulate_paths(spec: ProblemSpec, policy: Policy, cfg: SimConfig) -> PathSample:
    cfg.validate(spec)
    n_steps = cfg.n_steps(spec)
    dt = (spec.T - cfg.t0) / n_steps
    sq = np.sqrt(dt)
    t_grid = cfg.t0 + dt * np.arange(n_steps)
    m = spec.market
    c_grid = np.broadcast_to(np.asarray(policy.consumption(t_grid), dtype=float), t_grid.shape)
    l_grid = np.broadcast_to(np.asarray(spec.income_rate(t_grid), dtype=float), t_grid.shape)
    cash = l_grid - c_grid
    u_grid = None
    if policy.dollar_amount is not None:
        u_grid = np.broadcast_to(np.asarray(policy.dollar_amount(t_grid), dtype=float), t_grid.shape)
    x_start = spec.x0 if cfg.x0 is None else cfg.x0
    ex = m.mu - m.r

    def step(x, t, k, xi, pos_acc):
        if u_grid is not None:
            pos = u_grid[k]
            x += (m.r * x + ex * pos + cash[k]) * dt + (m.sigma * pos * sq) * xi
        else:
            pos = np.asarray(policy.investment(t, x), dtype=float) * x
            x += (m.r * x + ex * pos + cash[k]) * dt + m.sigma * sq * pos * xi
            pos_acc += pos * pos * dt
        return pos_acc

    def run_block(index, lo, hi):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(index,))))
        size = hi - lo
        half = size // 2 if cfg.antithetic else size
        xp = np.full(half, float(x_start))
        xm = np.full(half, float(x_start)) if cfg.antithetic else None
        acc_p = np.zeros(half)
        acc_m = np.zeros(half) if cfg.antithetic else None
        for k in range(n_steps):
            t = t_grid[k]
            xi = rng.standard_normal(half)
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                acc_p = step(xp, t, k, xi, acc_p)
                if xm is not None:
                    acc_m = step(xm, t, k, -xi, acc_m)
            if not np.isfinite(xp).all():
                raise NonFinitePath(lo + int(np.flatnonzero(~np.isfinite(xp))[0]), k)
            if xm is not None and not np.isfinite(xm).all():
                raise NonFinitePath(lo + half + int(np.flatnonzero(~np.isfinite(xm))[0]), k)
        if u_grid is not None:
            acc = size * float(np.sum(u_grid**2) * dt)
        else:
            acc = acc_p.sum() + (acc_m.sum() if xm is not None else 0.0)
        return xp, xm, acc

    ranges = _block_ranges(cfg.n_paths, cfg.block_size)
    jobs = [(i, lo, hi) for i, (lo, hi) in enumerate(ranges)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda j: run_block(*j), jobs))
    else:
        results = [run_block(*j) for j in jobs]

    disc = np.exp(-spec.prefs.delta * (spec.T - cfg.t0))
    y_plus = disc * np.concatenate([r[0] for r in results])
    y_minus = disc * np.concatenate([r[1] for r in results]) if cfg.antithetic else None
    position_sq = float(sum(r[2] for r in results)) / cfg.n_paths

    if spec.prefs.beta == 0.0:
        w, w_bias = 0.0, 0.0
    else:
        integrand = np.exp(-spec.prefs.rho * t_grid) * np.asarray(spec.utility.value(c_grid), dtype=float)
        w = float(np.sum(integrand) * dt)
        # left-rectangle error is bounded by dt times the total variation
        ends = np.append(integrand, np.exp(-spec.prefs.rho * spec.T)
                         * float(spec.utility.value(np.asarray(policy.consumption(spec.T), dtype=float))))
        w_bias = float(dt * np.sum(np.abs(np.diff(ends))))
    return PathSample(y_plus, y_minus, w, w_bias, position_sq, dt, n_steps)


def _estimates(sample: PathSample) -> EstimateTriple:
    y = sample.y
    n = y.size
    z = y * y
    y_hat, sd_y = _mean_std(y)
    z_hat, sd_z = _mean_std(z)
    _, sd_var = _mean_std(z - 2.0 * y_hat * y)
    if sample.y_minus is not None:
        _, sd_pair = _mean_std(0.5 * (sample.y_plus + sample.y_minus))
        eff = sd_pair / np.sqrt(n // 2)
    else:
        eff = sd_y / np.sqrt(n)
    rt = np.sqrt(n)
    return EstimateTriple(
        y_hat=float(y_hat), z_hat=float(z_hat), w_hat=sample.w,
        se_y=float(sd_y / rt), se_z=float(sd_z / rt), se_w=0.0, n_paths=n,
        var_hat=float(z_hat - y_hat**2), se_var=float(sd_var / rt),
        effective_se_y=float(eff), w_bias_bound=sample.w_bias_bound,
        position_sq=sample.position_sq, dt=sample.dt, n_steps=sample.n_steps,
        antithetic=sample.y_minus is not None,
    )


def simulate_estimates(spec: ProblemSpec, policy: Policy, cfg: SimConfig) -> EstimateTriple:
    """Simulate ``cfg.n_paths`` wealth paths under ``policy`` and estimate
    ``y = E[e^{-delta(T-t)} X(T)]``, ``z = E[(e^{-delta(T-t)} X(T))^2]`` and
    ``w = int e^{-rho s} U(c(s)) ds``.

    Consumption is a function of time only, so ``w`` is the same on every
    path and carries no sampling error; it is computed with the left
    rectangle rule on the simulation grid.
    """
    return _estimates(simulate_paths(spec, policy, cfg))


def estimate_objective(spec: ProblemSpec, policy: Policy, cfg: SimConfig):
    """Objective estimate and its delta-method standard error."""
    sample = simulate_paths(spec, policy, cfg)
    est = _estimates(sample)
    value = objective_of_triple(est.y_hat, est.z_hat, est.w_hat, spec.prefs, tol=np.inf)
    g = spec.prefs.gamma
    y = sample.y
    _, sd = _mean_std((1.0 + g * est.y_hat) * y - 0.5 * g * y * y)
    return float(value), float(sd / np.sqrt(y.size))
