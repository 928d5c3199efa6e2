"""Command-line front end.

Each subcommand has a flat set of options.  Values are resolved as built-in
defaults, then ``--config FILE`` (``key = value`` lines or a JSON manifest),
then explicit flags.  Every run writes ``manifest.json`` with the resolved
values into the output directory; passing that file back through
``--config`` reproduces the outputs byte for byte.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .closedform import ClosedFormParams, eval_Pbar, eval_Q, eval_R, eval_R_loss
from .experiments import (
    ExperimentResult,
    TauGridSpec,
    _created,
    run_convergence,
    run_nloss,
    run_threshold_scan,
    run_universal_curve,
    write_results,
)
from .integrator import IntegrationError, SolverConfig, evolve, write_snapshots_csv
from .ladder import JOINT_INVERTED, PURE_INVERTED, initial_state, triangle
from .observables import sample
from .rates import Family, RateFamily, build_generator
from .svg import emit_svg

OUTPUT_ENV = "SUPERRADIANCE_OUTPUT_DIR"
DEFAULT_OUTPUT = "superradiance-output"

log = logging.getLogger("superradiance")


class UsageError(Exception):
    pass


def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = [v for v in str(text).replace(" ", "").split(",") if v]
    out = []
    for v in vals:
        f = float(v)
        if f != int(f):
            raise ValueError(f"{v!r} is not an integer")
        out.append(int(f))
    return tuple(out)


def _int(text) -> int:
    (v,) = _ints(text) if not isinstance(text, int) else (text,)
    return v


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(*options) -> Callable:
    def conv(text):
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text

    return conv


# name -> (converter, default, help); a None default is filled in at run time
COMMON = {
    "out": (str, None, f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})"),
    "formats": (lambda t: tuple(_choice("csv", "json")(f) for f in (t if isinstance(t, (list, tuple)) else str(t).split(","))), ("csv",), "comma list of csv,json"),
    "svg": (_bool, True, "also write an SVG plot where one exists"),
    "created": (str, None, "timestamp recorded in result metadata (pinned on rerun)"),
}
PARAMS = {
    "delta0": (float, 0.75, "early matching exponent"),
    "delta1": (float, 0.4, "late matching exponent"),
    "lam": (int, 0, "offset of the continuum solution (0 or 1)"),
}
TOLS = {
    "rel_tol": (float, 1e-10, "relative local error tolerance"),
    "abs_tol": (float, 1e-13, "absolute local error tolerance"),
}

SUBCOMMANDS = {
    "evolve": {
        "n": (_int, 2, "number of atoms"),
        "gamma": (float, 0.0, "incoherent/collective ratio"),
        "family": (_choice(*[f.value for f in Family]), None, "rate set (default PureExact, or LossExact when gamma > 0)"),
        "tau": (_floats, (1.0,), "comma list of snapshot times"),
        **TOLS,
    },
    "closedform": {
        "n": (_int, 20, "number of atoms"),
        "gamma": (float, 0.0, "loss ratio (R_loss only)"),
        "kind": (_choice("Q", "Pbar", "R", "R_loss"), "R", "which closed form"),
        "tau": (_floats, (1.0,), "comma list of times"),
        **PARAMS,
    },
    "converge": {
        "ns": (_ints, (5, 20, 100), "comma list of atom numbers"),
        "gamma": (float, 0.0, "loss ratio"),
        "reference": (_choice("R", "Pbar"), "R", "closed form to compare against"),
        "points": (_int, 200, "tau grid points per N"),
        "workers": (_int, 1, "parallel trajectories"),
        **PARAMS,
        **TOLS,
    },
    "curve": {
        "tmin": (float, 0.01, "smallest T"),
        "tmax": (float, 100.0, "largest T"),
        "points": (_int, 400, "number of T values (log spaced)"),
    },
    "threshold": {
        "gammas": (_floats, (0.0, 1.0, 2.0), "comma list of loss ratios"),
        "tol": (float, 1e-3, "curvature counted as non-positive below this"),
    },
    "nloss": {
        "n": (_int, 100, "number of atoms"),
        "gamma": (float, 0.2, "loss ratio"),
        "points": (_int, 2001, "quadrature points"),
        **TOLS,
    },
}


def _options(cmd: str) -> dict:
    return {**SUBCOMMANDS[cmd], **COMMON}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="superradiance", description="Rate-equation superradiance toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in SUBCOMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="key=value file or JSON manifest")
        for name, (_, default, help_) in _options(cmd).items():
            sp.add_argument(
                "--" + name.replace("_", "-"),
                dest=name,
                default=argparse.SUPPRESS,
                help=f"{help_} [default: {default}]",
            )
    return p


def load_config(path) -> dict:
    """Read a flat ``key = value`` file (``#`` comments) or a JSON object."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError(f"{path}: JSON config must be an object")
        return data
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(cmd: str, file_values: dict, flag_values: dict) -> dict:
    opts = _options(cmd)
    file_values = dict(file_values)
    stored = file_values.pop("command", cmd)
    if stored != cmd:
        raise UsageError(f"config was written for {stored!r}, not {cmd!r}")
    file_values.pop("version", None)
    unknown = sorted(set(file_values) - set(opts))
    if unknown:
        raise UsageError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
    cfg = {name: default for name, (_, default, _) in opts.items()}
    for source in (file_values, flag_values):
        for k, v in source.items():
            if v is None:
                cfg[k] = None
                continue
            try:
                cfg[k] = opts[k][0](v)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"--{k.replace('_', '-')}: {exc}") from None
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)
    if cfg["created"] is None:
        cfg["created"] = _created()
    return cfg


def _params(cfg) -> ClosedFormParams:
    return ClosedFormParams(cfg["delta0"], cfg["delta1"], cfg["lam"])


def _save(result: ExperimentResult, cfg, out: Path, stem: str) -> None:
    result.metadata["created"] = cfg["created"]
    for fmt in cfg["formats"]:
        write_results(result, out / f"{stem}.{fmt}", fmt)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def cmd_evolve(cfg, out: Path) -> None:
    N, gamma = cfg["n"], cfg["gamma"]
    _require(N >= 1, "--n must be >= 1")
    _require(gamma >= 0, "--gamma must be >= 0")
    _require(all(t >= 0 for t in cfg["tau"]), "--tau values must be >= 0")
    tag = Family(cfg["family"]) if cfg["family"] else (Family.LOSS_EXACT if gamma > 0 else Family.PURE_EXACT)
    _require(tag.joint or gamma == 0, f"{tag.value} has no loss channel; drop --gamma or pick a Loss family")
    g = build_generator(N, RateFamily(tag, gamma))
    p0 = initial_state(N, JOINT_INVERTED if tag.joint else PURE_INVERTED)
    taus = tuple(sorted(cfg["tau"]))
    snaps = evolve(g, p0, SolverConfig(cfg["rel_tol"], cfg["abs_tol"], snapshot_times=taus))
    write_snapshots_csv(snaps, out / "snapshots.csv")
    rows = []
    for s in snaps:
        o = sample(s.dist, gamma, s.tau, tol=1.0)
        rows.append([s.tau, o.mu, o.rho, o.one_norm, o.incoherent_rate, o.dark_mean])
        if N <= 16 and not tag.joint:
            values = ", ".join(f"{v:.6f}" for v in s.dist.linear())
            print(f"tau={s.tau:g}  P=({values})")
        print(f"tau={s.tau:g}  mu={o.mu:.6f}  rho={o.rho:.6f}  norm={o.one_norm:.12f}")
    result = ExperimentResult(
        "evolve",
        {"N": N, "gamma": gamma, "family": tag.value, "rel_tol": cfg["rel_tol"], "abs_tol": cfg["abs_tol"]},
        ["tau", "mu", "rho", "one_norm", "incoherent_rate", "dark_mean"],
        rows,
        metadata={"version": __version__},
    )
    _save(result, cfg, out, "observables")


def cmd_closedform(cfg, out: Path) -> None:
    N, kind, gamma = cfg["n"], cfg["kind"], cfg["gamma"]
    _require(N >= 1, "--n must be >= 1")
    _require(gamma >= 0, "--gamma must be >= 0")
    _require(kind == "R_loss" or gamma == 0, "--gamma only applies to --kind R_loss")
    params = _params(cfg)
    taus = tuple(sorted(cfg["tau"]))
    rows = []
    for tau in taus:
        if kind == "Q":
            d = eval_Q(N, tau)
        elif kind == "Pbar":
            d = eval_Pbar(N, tau, params.lam)
        elif kind == "R":
            d = eval_R(N, tau, params)
        else:
            d = eval_R_loss(N, gamma, tau, params)
        logs = d.log()
        n_lab, r_lab = triangle(N) if kind == "R_loss" else (np.arange(N + 1), np.zeros(N + 1, int))
        for n, r, lv in zip(n_lab, r_lab, logs):
            rows.append([tau, int(n), int(r), float(math.exp(lv)) if lv > -745 else 0.0, float(lv)])
        print(f"{kind}(N={N}, tau={tau:g}): one-norm {d.one_norm():.10f}")
    result = ExperimentResult(
        "closedform",
        {"N": N, "kind": kind, "gamma": gamma, "delta0": params.delta0, "delta1": params.delta1, "lam": params.lam},
        ["tau", "n", "r", "p", "log_p"],
        rows,
        metadata={"version": __version__},
    )
    _save(result, cfg, out, "closedform")


def cmd_converge(cfg, out: Path) -> None:
    Ns = cfg["ns"]
    _require(len(Ns) > 0 and all(N >= 1 for N in Ns), "--ns must list atom numbers >= 1")
    _require(cfg["points"] >= 3, "--points must be >= 3")
    _require(cfg["workers"] >= 1, "--workers must be >= 1")
    result = run_convergence(
        Ns,
        cfg["gamma"],
        TauGridSpec(n_points=cfg["points"]),
        _params(cfg),
        reference=cfg["reference"],
        rel_tol=cfg["rel_tol"],
        abs_tol=cfg["abs_tol"],
        workers=cfg["workers"],
    )
    for N, err in result.summary["max_error"].items():
        print(f"N={N}: max one-norm error {err:.6g}")
    _save(result, cfg, out, "convergence")
    if cfg["svg"]:
        emit_svg(result, "tau", ["error"], out / "convergence.svg", logy=True, group_col="N",
                 title=f"one-norm distance to {cfg['reference']}")


def cmd_curve(cfg, out: Path) -> None:
    _require(0 < cfg["tmin"] < cfg["tmax"], "need 0 < --tmin < --tmax")
    _require(cfg["points"] >= 2, "--points must be >= 2")
    T = np.geomspace(cfg["tmin"], cfg["tmax"], cfg["points"])
    result = run_universal_curve(T)
    s = result.summary
    print(f"peak: T*={s['T_peak']:.6f}  rho*={s['rho_peak']:.6f}  mu*={s['mu_peak']:.6f}")
    _save(result, cfg, out, "curve")
    if cfg["svg"]:
        emit_svg(result, "T", ["mu", "rho"], out / "curve.svg", logx=True, title="universal curve")


def cmd_threshold(cfg, out: Path) -> None:
    _require(len(cfg["gammas"]) > 0 and all(g >= 0 for g in cfg["gammas"]), "--gammas must be >= 0")
    _require(cfg["tol"] >= 0, "--tol must be >= 0")
    result = run_threshold_scan(cfg["gammas"], tol=cfg["tol"])
    for gamma, v in result.summary.items():
        print(f"gamma={gamma}: empirical threshold {v['empirical']}, predicted {v['predicted']}")
    _save(result, cfg, out, "threshold")


def cmd_nloss(cfg, out: Path) -> None:
    _require(cfg["n"] >= 1, "--n must be >= 1")
    _require(cfg["gamma"] >= 0, "--gamma must be >= 0")
    _require(cfg["points"] >= 3, "--points must be >= 3")
    result = run_nloss(cfg["n"], cfg["gamma"], points=cfg["points"], rel_tol=cfg["rel_tol"])
    s = result.summary
    print(f"N_loss measured {s['measured']:.6f}  formula {s['formula']:.6f}  ratio {s['ratio']:.4f}")
    _save(result, cfg, out, "nloss")
    if cfg["svg"]:
        emit_svg(result, "tau", ["incoherent_rate"], out / "nloss.svg", title="incoherent emission rate")


HANDLERS = {
    "evolve": cmd_evolve,
    "closedform": cmd_closedform,
    "converge": cmd_converge,
    "curve": cmd_curve,
    "threshold": cmd_threshold,
    "nloss": cmd_nloss,
}


def _manifest(cmd: str, cfg: dict) -> str:
    payload = {"command": cmd, "version": __version__}
    for k, v in cfg.items():
        payload[k] = list(v) if isinstance(v, tuple) else v
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def dispatch(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        flags = {k: v for k, v in vars(args).items() if k in _options(args.command)}
        file_values = load_config(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, flags)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out)
        (out / "manifest.json").write_text(_manifest(args.command, cfg))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())
