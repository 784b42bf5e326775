"""Command-line front end.

::

    mvu solve|figures|simulate|equilibrium|verify|sensitivity --config PATH
        [--fig N] [--sweep a,b,c] [--out DIR] [--falsify] [--workers K]

Every command writes its product files plus ``manifest.json`` (resolved
parameters, timestamp, SHA-256 of each product, verdicts) into ``--out``.
Products are byte-identical across reruns; only the manifest carries a
timestamp.

Exit codes: 0 success, 2 config or validation error, 3 numerical-check
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .audit import audit_report
from .closed_form import (
    build_coefficients,
    consumption_star,
    dollar_amount_star,
    equilibrium_policy,
    investment_star,
    sensitivity_beta,
    terminal_mean,
    terminal_second_moment,
    terminal_variance,
)
from .config import RunConfig, parse_config
from .errors import ConfigError, GridTooCoarse, InvalidParameter, MVUError, UtilityMismatch
from .montecarlo import simulate_estimates
from .problem import ProblemSpec
from .utility import ExponentialUtility, LogUtility, PowerUtility
from .verify import FDGrid, fd_solve_pdes, foc_residuals, hjb_argmin_check, ode_residuals

__all__ = ["main", "FIGURE_DEFAULTS", "figure_tables", "continuity_certificate"]

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4
FIGURE_DIGITS = 17

FIGURE_DEFAULTS = {
    1: {"beta": (0.5, 1.0, 2.0)},
    2: {"beta": (0.5, 1.0, 2.0), "theta": 0.1, "theta_sweep": (0.1, 0.3, 0.5, 0.7), "beta_right": 1.0},
    3: {"beta": (5.0, 10.0, 20.0), "eta": 3.0, "eta_sweep": (1.0, 3.0, 5.0), "beta_right": 10.0},
}

MODE_HELP = (
    "mode.consumption = paper evaluates the literal consumption formula; "
    "foc evaluates the pseudo-Bellman stationarity condition. They coincide when "
    "rho = delta = 0. For log utility the foc mode gives c(t) = beta e^{-rho t} / A(t)."
)


def fmt(v, digits: int = 9) -> str:
    return "%.*g" % (digits, v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


class Writer:
    """Collects product files in ``out`` and their hashes for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.hashes: Dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.hashes[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header: Sequence[str], columns: Sequence[np.ndarray], digits: int = 9):
        cols = [np.asarray(c, dtype=float) for c in columns]
        lines = [",".join(header)]
        lines += [",".join(fmt(c[i], digits) for c in cols) for i in range(len(cols[0]))]
        self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, obj):
        self._write(name, json.dumps(_jsonable(obj), indent=2) + "\n")

    def manifest(self, command: str, cfg: RunConfig, verdicts: dict, warnings: List[str], extra: Optional[dict] = None):
        manifest = {
            "artifact": "artifact",
            "version": __version__,
            "command": command,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "parameters": cfg.resolved(),
            "outputs": dict(sorted(self.hashes.items())),
            "verdicts": verdicts,
            "warnings": warnings,
        }
        if extra:
            manifest.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n", encoding="utf-8")


def _sweep(arg: Optional[str], default):
    if not arg:
        return tuple(default)
    try:
        return tuple(float(v) for v in arg.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"--sweep: expected comma-separated numbers, got {arg!r}") from None


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# ---- solve --------------------------------------------------------------

def cmd_solve(cfg: RunConfig, w: Writer, args) -> dict:
    spec = cfg.spec
    co = build_coefficients(spec, cfg.settings.n)
    t, x0 = co.t, spec.x0
    w.csv("strategy.csv",
          ["t", "c_star", "pi_star_at_x0", "dollar_amount", "A", "a", "b", "B", "q", "V_at_x0", "mean", "variance"],
          [t, co.c, investment_star(spec, t, x0), dollar_amount_star(spec, t), co.A, co.a, co.b, co.B, co.q,
           co.A * x0 + co.B, co.a * x0 + co.b, terminal_variance(spec, co, t)])
    return {"verdicts": {}, "warnings": list(co.warnings)}


# ---- figures ------------------------------------------------------------

def _panel(spec: ProblemSpec, t, variants):
    return [np.asarray(consumption_star(spec.replace(**v), t), dtype=float) for v in variants]


def figure_tables(spec: ProblemSpec, fig: int, t, sweep=None) -> Dict[str, tuple]:
    """``{file name: (header, columns, beta_ordered)}`` for one figure."""
    d = FIGURE_DEFAULTS.get(fig, {})
    if fig == 1:
        betas = tuple(sweep or d["beta"])
        cols = _panel(spec, t, [{"beta": b, "utility": LogUtility()} for b in betas])
        return {"fig1.csv": (["t"] + [f"c_beta_{fmt(b)}" for b in betas], [t] + cols, betas)}
    if fig == 2:
        betas = tuple(sweep or d["beta"])
        left = _panel(spec, t, [{"beta": b, "utility": PowerUtility(d["theta"])} for b in betas])
        right = _panel(spec, t, [{"beta": d["beta_right"], "utility": PowerUtility(th)} for th in d["theta_sweep"]])
        return {
            "fig2_left.csv": (["t"] + [f"c_beta_{fmt(b)}" for b in betas], [t] + left, betas),
            "fig2_right.csv": (["t"] + [f"c_theta_{fmt(th)}" for th in d["theta_sweep"]], [t] + right, None),
        }
    if fig == 3:
        betas = tuple(sweep or d["beta"])
        left = _panel(spec, t, [{"beta": b, "utility": ExponentialUtility(d["eta"])} for b in betas])
        right = _panel(spec, t, [{"beta": d["beta_right"], "utility": ExponentialUtility(e)} for e in d["eta_sweep"]])
        return {
            "fig3_left.csv": (["t"] + [f"c_beta_{fmt(b)}" for b in betas], [t] + left, betas),
            "fig3_right.csv": (["t"] + [f"c_eta_{fmt(e)}" for e in d["eta_sweep"]], [t] + right, None),
        }
    if fig == 4:
        cols = _panel(spec, t, [{"beta": 1.0, "utility": PowerUtility(0.5)},
                                {"beta": 10.0, "utility": ExponentialUtility(1.0)}])
        return {"fig4.csv": (["t", "c_power_theta_0.5_beta_1", "c_exp_eta_1_beta_10"], [t] + cols, None)}
    raise ConfigError(f"--fig must be 1, 2, 3 or 4, got {fig}")


def continuity_certificate(spec: ProblemSpec, variant: dict, t, safety: float = 1.5) -> dict:
    """Max adjacent-point jump of ``c*`` against ``C * dt``.

    ``C`` is ``safety`` times the largest slope seen on a grid twice as fine,
    so a genuine discontinuity (a jump that does not shrink with ``dt``)
    fails the certificate.
    """
    s = spec.replace(**variant)
    c = np.asarray(consumption_star(s, t), dtype=float)
    dt = float(t[1] - t[0])
    fine_t = np.linspace(t[0], t[-1], 2 * (t.size - 1) + 1)
    fine = np.asarray(consumption_star(s, fine_t), dtype=float)
    C = safety * float(np.max(np.abs(np.diff(fine))) / (fine_t[1] - fine_t[0]))
    jump = float(np.max(np.abs(np.diff(c))))
    return {"max_jump": jump, "bound": C * dt, "C": C, "verdict": _verdict(jump <= C * dt)}


def cmd_figures(cfg: RunConfig, w: Writer, args) -> dict:
    if args.fig is None:
        raise ConfigError("figures requires --fig N")
    spec = cfg.spec
    t = np.linspace(0.0, spec.T, cfg.settings.n + 1)
    verdicts = {}
    for name, (header, cols, betas) in figure_tables(spec, args.fig, t, _sweep(args.sweep, ())).items():
        # figure data round-trips exactly so it can be checked against the closed forms
        w.csv(name, header, cols, digits=FIGURE_DIGITS)
        curves = np.array(cols[1:])
        # exp utility may go negative unless clamped, but it stays monotone
        verdicts[f"{name}:increasing_in_t"] = _verdict(bool(np.all(np.diff(curves, axis=1) > 0)))
        if betas is not None:
            order = np.argsort(betas)
            verdicts[f"{name}:ordered_by_beta"] = _verdict(bool(np.all(np.diff(curves[order], axis=0) > 0)))
    if args.fig == 4:
        verdicts["fig4.csv:continuity_power"] = continuity_certificate(
            spec, {"beta": 1.0, "utility": PowerUtility(0.5)}, t)
        verdicts["fig4.csv:continuity_exp"] = continuity_certificate(
            spec, {"beta": 10.0, "utility": ExponentialUtility(1.0)}, t)
    return {"verdicts": verdicts, "warnings": ["figure panels set their own utility family and beta; "
                                               "market, horizon and mode come from the config"]}


# ---- simulate -----------------------------------------------------------

def _z(diff, se):
    if se > 0:
        return diff / se
    return 0.0 if diff == 0 else math.copysign(math.inf, diff)


def mc_summary(spec: ProblemSpec, co, est) -> dict:
    x0 = spec.x0
    mean = float(terminal_mean(spec, co, 0.0, x0))
    var = float(terminal_variance(spec, co, 0.0))
    second = float(terminal_second_moment(spec, co, 0.0, x0))
    q = float(co.q_at(0.0)) if spec.prefs.beta else 0.0
    z = {"y": _z(est.y_hat - mean, est.se_y), "z": _z(est.z_hat - second, est.se_z),
         "variance": _z(est.var_hat - var, est.se_var)}
    w_err = est.w_hat - q
    w_tol = max(1e-3, est.w_bias_bound)
    verdicts = {k: _verdict(abs(v) <= 3.0) for k, v in z.items()}
    verdicts["w"] = _verdict(abs(w_err) <= w_tol)
    return {
        "estimates": est.as_dict(),
        "closed_form": {"y": mean, "z": second, "variance": var, "w": q},
        "z_scores": z,
        "w_error": w_err,
        "w_tolerance": w_tol,
        "verdicts": verdicts,
        "verdict": _verdict(all(v == "pass" for v in verdicts.values())),
    }


def cmd_simulate(cfg: RunConfig, w: Writer, args) -> dict:
    spec = cfg.spec
    co = build_coefficients(spec, cfg.settings.n)
    sim = cfg.settings.sim
    if args.workers:
        sim = type(sim)(**{**sim.__dict__, "workers": args.workers})
    est = simulate_estimates(spec, equilibrium_policy(spec), sim)
    report = mc_summary(spec, co, est)
    w.json("mc_report.json", report)
    return {"verdicts": {"simulate": report["verdict"], **report["verdicts"]}, "warnings": list(co.warnings),
            "fail": report["verdict"] == "fail"}


# ---- equilibrium --------------------------------------------------------

def cmd_equilibrium(cfg: RunConfig, w: Writer, args) -> dict:
    spec = cfg.spec
    co = build_coefficients(spec, cfg.settings.n)
    rep = audit_report(spec, co, n=cfg.settings.n, investment_scale=2.0 if args.falsify else 1.0)
    body = rep.as_dict()
    body["min_gap"] = min(m["min_gap"] for m in body["modes"].values() if m["min_gap"] is not None)
    body["falsify"] = bool(args.falsify)
    w.json("equilibrium_report.json", body)
    verdicts = {"equilibrium": rep.verdict, **{f"mode:{k}": v.verdict for k, v in rep.modes.items()}}
    return {"verdicts": verdicts, "warnings": list(co.warnings), "fail": rep.verdict == "fail"}


# ---- verify -------------------------------------------------------------

def cmd_verify(cfg: RunConfig, w: Writer, args) -> dict:
    spec = cfg.spec
    co = build_coefficients(spec, cfg.settings.n)
    table = co
    if args.falsify:
        table = dataclasses.replace(co, B=co.B + 0.01)
    x0, T = spec.x0, spec.T
    ode = ode_residuals(spec, table)
    foc = None
    for t in (0.0, T / 2):
        for x in (x0 / 2, x0, 2 * x0):
            r = foc_residuals(spec, table, t, x)
            foc = r if foc is None else foc + r
    hjb = None
    for t, x in ((0.0, x0), (T / 5, x0), (T / 2, 2 * x0)):
        c = float(consumption_star(spec, t))
        pi = float(investment_star(spec, t, x))
        r = hjb_argmin_check(spec, table, t, x, c * np.linspace(0.5, 1.5, 101), pi * np.linspace(0.5, 1.5, 101))
        hjb = r if hjb is None else hjb + r
    fd = fd_solve_pdes(spec, equilibrium_policy(spec), FDGrid.around(x0), coeffs=co)
    est = simulate_estimates(spec, equilibrium_policy(spec), cfg.settings.sim)
    Y, Z, W = fd.at(x0)
    cross = {
        "Y": {"fd": Y, "mc": est.y_hat, "se": est.se_y, "tolerance": 3 * est.se_y},
        "Z": {"fd": Z, "mc": est.z_hat, "se": est.se_z, "tolerance": 3 * est.se_z},
        # w carries no sampling error; its quadrature bias bound stands in for 3 se
        "W": {"fd": W, "mc": est.w_hat, "se": est.se_w, "tolerance": 3 * est.se_w + est.w_bias_bound},
    }
    for v in cross.values():
        v["abs_diff"] = abs(v["fd"] - v["mc"])
        v["verdict"] = _verdict(v["abs_diff"] <= v["tolerance"])
    sections = {"ode": ode, "foc": foc, "hjb": hjb, "fd": fd.report}
    verdicts = {k: r.verdict for k, r in sections.items()}
    verdicts["fd_vs_mc"] = _verdict(all(v["verdict"] == "pass" for v in cross.values()))
    values = list(verdicts.values())
    overall = "fail" if "fail" in values else "pass-with-notes" if "pass-with-notes" in values else "pass"
    body = {
        "verdict": overall,
        "sections": {k: r.as_dict() for k, r in sections.items()},
        "fd_errors": fd.errors,
        "fd_vs_mc": cross,
        "falsify": bool(args.falsify),
    }
    w.json("verify_report.json", body)
    return {"verdicts": {"verify": overall, **verdicts}, "warnings": list(co.warnings), "fail": overall == "fail"}


# ---- sensitivity --------------------------------------------------------

def cmd_sensitivity(cfg: RunConfig, w: Writer, args) -> dict:
    spec = cfg.spec
    if not isinstance(spec.utility, LogUtility):
        raise UtilityMismatch("sensitivity requires utility.kind = log")
    betas = _sweep(args.sweep, np.linspace(0.5, 2.0, 16))
    rows = []
    for b in betas:
        s = spec.replace(beta=b)
        rows.append(sensitivity_beta(s, build_coefficients(s, cfg.settings.n), 0.0, spec.x0))
    cols = [[getattr(r, k) for r in rows] for k in ("beta", "V", "dV_fd", "d2V_fd", "M_paper", "dV_paper",
                                                     "discrepancy")]
    w.csv("sensitivity.csv", ["beta", "V", "dV_fd", "d2V_fd", "M_paper", "dV_paper", "discrepancy"], cols)
    convex = all(r.d2V_fd > 0 for r in rows)
    return {"verdicts": {"d2V_fd_positive": _verdict(convex)}, "warnings": [],
            "extra": {"M_at_0": rows[0].M_paper if rows else None}}


COMMANDS = {
    "solve": cmd_solve,
    "figures": cmd_figures,
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "verify": cmd_verify,
    "sensitivity": cmd_sensitivity,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvu", description="Equilibrium consumption-investment strategies for the "
                                "mean-variance-utility problem.", epilog=MODE_HELP)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value config file (UTF-8)")
    p.add_argument("--fig", type=int, default=None, help="figure number for 'figures' (1-4)")
    p.add_argument("--sweep", default=None, help="comma-separated beta values (figures, sensitivity)")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--falsify", action="store_true",
                   help="falsification control: doubled investment (equilibrium) or shifted B table (verify)")
    p.add_argument("--workers", type=int, default=None, help="Monte Carlo worker threads (simulate)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidParameter, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        writer = Writer(Path(args.out))
        result = COMMANDS[args.command](cfg, writer, args)
        writer.manifest(args.command, cfg, result["verdicts"], result["warnings"], result.get("extra"))
    except GridTooCoarse as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidParameter, UtilityMismatch, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MVUError as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if result.get("fail"):
        print(f"{args.command}: verdict fail (see {args.out})", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
