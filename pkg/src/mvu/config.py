"""Line-based ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key is optional; missing
keys take the defaults below.  ``utility.theta``/``utility.eta`` become
required once ``utility.kind`` selects the power/exponential family.

=================== ==================== =========================================
key                 default              meaning
=================== ==================== =========================================
market.r            0.01                 risk-free rate
market.mu           0.05                 stock drift
market.sigma        0.2                  stock volatility
prefs.gamma         1                    risk aversion
prefs.beta          1                    consumption preference weight
prefs.rho           0                    utility discount rate
prefs.delta         0                    wealth discount rate
horizon.T           10                   horizon
init.x0             1                    initial wealth
income.segments     (none, l = 0)        ``start:rate`` pairs separated by ``;``
utility.kind        log                  ``log``, ``power`` or ``exp``
utility.theta       (required for power) power exponent, ``theta < 1``, ``theta != 0``
utility.eta         (required for exp)   absolute risk aversion of consumption
mode.consumption    paper                ``paper`` (literal formula) or ``foc``
mode.clamp          false                clamp negative consumption at 0
grid.n              2000                 coefficient grid intervals
mc.paths            200000               Monte Carlo paths
mc.dt               T / 2000             Euler step
mc.seed             42                   RNG seed
mc.antithetic       true                 antithetic pairs
=================== ==================== =========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from .errors import MissingKey, ParseError, UnknownKey
from .montecarlo import SimConfig
from .problem import ConsumptionMode, IncomeSchedule, MarketParams, Preferences, ProblemSpec, validate_spec
from .utility import ExponentialUtility, LogUtility, PowerUtility

__all__ = ["RunSettings", "RunConfig", "KNOWN_KEYS", "parse_config", "parse_config_text"]

KNOWN_KEYS = (
    "market.r", "market.mu", "market.sigma",
    "prefs.gamma", "prefs.beta", "prefs.rho", "prefs.delta",
    "horizon.T", "init.x0", "income.segments",
    "utility.kind", "utility.theta", "utility.eta",
    "mode.consumption", "mode.clamp",
    "grid.n", "mc.paths", "mc.dt", "mc.seed", "mc.antithetic",
)

_MODES = {"paper": ConsumptionMode.PAPER_LITERAL, "foc": ConsumptionMode.FOC_DERIVED}
_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


@dataclass(frozen=True)
class RunSettings:
    n: int = 2000
    sim: SimConfig = field(default_factory=SimConfig)


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    settings: RunSettings
    raw: Dict[str, str]

    def resolved(self) -> dict:
        """Fully resolved parameter set, as recorded in run manifests."""
        s, sim = self.spec, self.settings.sim
        u = s.utility
        utility = {"kind": "log"}
        if isinstance(u, PowerUtility):
            utility = {"kind": "power", "theta": u.theta}
        elif isinstance(u, ExponentialUtility):
            utility = {"kind": "exp", "eta": u.eta}
        return {
            "market": {"r": s.market.r, "mu": s.market.mu, "sigma": s.market.sigma},
            "prefs": {"gamma": s.prefs.gamma, "beta": s.prefs.beta, "rho": s.prefs.rho, "delta": s.prefs.delta},
            "horizon": {"T": s.T},
            "init": {"x0": s.x0},
            "income": {"segments": [list(seg) for seg in s.income.segments]},
            "utility": utility,
            "mode": {"consumption": s.consumption_mode.value, "clamp": s.clamp_consumption},
            "grid": {"n": self.settings.n},
            "mc": {"paths": sim.n_paths, "dt": sim.dt, "seed": sim.seed, "antithetic": sim.antithetic},
        }


def _float(key, text, line):
    try:
        return float(text)
    except ValueError:
        raise ParseError(line, f"{key}: expected a number, got {text!r}") from None


def _int(key, text, line):
    try:
        return int(text)
    except ValueError:
        raise ParseError(line, f"{key}: expected an integer, got {text!r}") from None


def _segments(text, line):
    segs = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        start, sep, rate = part.partition(":")
        if not sep:
            raise ParseError(line, f"income.segments: expected start:rate, got {part!r}")
        segs.append((_float("income.segments", start, line), _float("income.segments", rate, line)))
    return IncomeSchedule(tuple(segs))


def parse_config_text(text: str) -> RunConfig:
    raw: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(number, "expected 'key = value'")
        if key not in KNOWN_KEYS:
            raise UnknownKey(key)
        if key in raw:
            raise ParseError(number, f"duplicate key {key}")
        if not value:
            raise ParseError(number, f"{key}: empty value")
        raw[key], lines[key] = value, number

    def get(key, conv, default):
        if key not in raw:
            return default
        return conv(key, raw[key], lines[key])

    def choice(key, options, default):
        if key not in raw:
            return default
        value = raw[key].lower()
        if value not in options:
            raise ParseError(lines[key], f"{key}: expected one of {sorted(options)}, got {raw[key]!r}")
        return options[value]

    kind = choice("utility.kind", {"log": "log", "power": "power", "exp": "exp"}, "log")
    if kind == "power":
        if "utility.theta" not in raw:
            raise MissingKey("utility.theta")
        utility = PowerUtility(get("utility.theta", _float, None))
    elif kind == "exp":
        if "utility.eta" not in raw:
            raise MissingKey("utility.eta")
        utility = ExponentialUtility(get("utility.eta", _float, None))
    else:
        utility = LogUtility()

    T = get("horizon.T", _float, 10.0)
    spec = ProblemSpec(
        market=MarketParams(get("market.r", _float, 0.01), get("market.mu", _float, 0.05),
                            get("market.sigma", _float, 0.2)),
        prefs=Preferences(get("prefs.gamma", _float, 1.0), get("prefs.beta", _float, 1.0),
                          get("prefs.rho", _float, 0.0), get("prefs.delta", _float, 0.0)),
        T=T,
        x0=get("init.x0", _float, 1.0),
        income=_segments(raw["income.segments"], lines["income.segments"]) if "income.segments" in raw
        else IncomeSchedule(),
        utility=utility,
        consumption_mode=choice("mode.consumption", _MODES, ConsumptionMode.PAPER_LITERAL),
        clamp_consumption=choice("mode.clamp", _BOOLS, False),
    )
    validate_spec(spec)
    sim = SimConfig(
        n_paths=get("mc.paths", _int, 200_000),
        dt=get("mc.dt", _float, T / 2000.0),
        seed=get("mc.seed", _int, 42),
        antithetic=choice("mc.antithetic", _BOOLS, True),
    )
    return RunConfig(spec, RunSettings(get("grid.n", _int, 2000), sim), raw)


def parse_config(path) -> RunConfig:
    """Read a UTF-8 config file.  See the module docstring for keys."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
