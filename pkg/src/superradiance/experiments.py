"""Desk-scale studies built on the integrator and the closed forms.

Every runner returns an :class:`ExperimentResult`: a flat table (``columns``
and ``rows``) plus a ``summary`` of the headline numbers, the parameters it
was called with, and metadata.  Results are deterministic; the only
run-dependent field is ``metadata["created"]``, which honours
``SOURCE_DATE_EPOCH``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from . import __version__
from .closedform import DEFAULT_PARAMS, ClosedFormParams, eval_Pbar, eval_R, eval_R_loss
from .integrator import SolverConfig, evolve
from .ladder import JOINT_INVERTED, PURE_INVERTED, JointDistribution, initial_state
from .observables import (
    continuum_observables,
    exact_initial_curvature,
    initial_curvature,
    n_loss_formula,
    one_norm_distance,
    pure_observables,
    sample,
    threshold_N,
)
from .rates import Family, RateFamily, build_generator

PURE_BUDGET = 5000
LOSS_BUDGET = 600

# tighter than the SolverConfig defaults are unnecessary for the 1e-8 targets
DEFAULT_REL_TOL = 1e-10
DEFAULT_ABS_TOL = 1e-13


@dataclass
class ExperimentResult:
    name: str
    parameters: dict
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise ValueError(f"experiment {self.name!r} produced no rows")
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise ValueError(f"row {row!r} does not match columns {self.columns}")

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)


def _created() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return when.isoformat()


def _metadata(created: str | None = None) -> dict:
    return {"created": created or _created(), "version": __version__}


def check_budget(N: int, joint: bool) -> None:
    budget = LOSS_BUDGET if joint else PURE_BUDGET
    if N > budget:
        kind = "loss" if joint else "pure"
        raise ValueError(
            f"N={N} exceeds the {kind} evolution budget of {budget} "
            f"({(N // 2 + 1) ** 2 if joint else N + 1} states)"
        )


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# tau grids


@dataclass(frozen=True)
class TauGridSpec:
    """Grid on ``[tau_min, span * ln N]``.

    Linear up to ``T = T_lo``, uniform in ``T = e^tau/N`` across the burst up
    to ``T = T_hi``, linear again afterwards.  ``extra`` adds absolute times
    and ``extra_log`` adds multiples of ``ln N``; the matching time ``tau1``
    is always included when it lies in range.
    """

    n_points: int = 200
    tau_min: float = 0.1
    span: float = 3.0
    T_lo: float = 0.25
    T_hi: float = 8.0
    extra: tuple = ()
    extra_log: tuple = ()

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("n_points must be >= 3")
        if not (self.tau_min >= 0 and self.span > 0 and 0 < self.T_lo < self.T_hi):
            raise ValueError("invalid tau grid spec")
        object.__setattr__(self, "extra", tuple(float(x) for x in self.extra))
        object.__setattr__(self, "extra_log", tuple(float(x) for x in self.extra_log))

    def grid(self, N: int, params: ClosedFormParams = DEFAULT_PARAMS) -> np.ndarray:
        L = math.log(N)
        hi = max(self.span * L, self.tau_min)
        a = min(max(math.log(N * self.T_lo), self.tau_min), hi)
        b = min(max(math.log(N * self.T_hi), a), hi)
        n_early = self.n_points // 5
        n_late = self.n_points * 3 // 10
        n_mid = self.n_points - n_early - n_late
        parts = [
            np.linspace(self.tau_min, a, n_early, endpoint=False),
            np.log(N * np.linspace(math.exp(a) / N, math.exp(b) / N, n_mid, endpoint=False)),
            np.linspace(b, hi, n_late),
            [x for x in self.extra],
            [x * L for x in self.extra_log],
        ]
        t1 = params.tau1(N)
        if self.tau_min <= t1 <= hi:
            parts.append([t1])
        return np.unique(np.concatenate([np.asarray(p, dtype=float) for p in parts]))


DEFAULT_GRID = TauGridSpec()


# ---------------------------------------------------------------------------
# exact trajectories


def _family(gamma: float, joint: bool) -> RateFamily:
    return RateFamily(Family.LOSS_EXACT, gamma) if joint else RateFamily(Family.PURE_EXACT)


def exact_trajectory(
    N: int,
    taus,
    gamma: float = 0.0,
    joint: bool | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
):
    """Snapshots of the exact evolution from the fully inverted state."""
    joint = gamma > 0 if joint is None else joint
    if gamma > 0 and not joint:
        raise ValueError("gamma > 0 needs the joint (loss) state space")
    check_budget(N, joint)
    g = build_generator(N, _family(gamma, joint))
    p0 = initial_state(N, JOINT_INVERTED if joint else PURE_INVERTED)
    taus = np.asarray(taus, dtype=float)
    cfg = SolverConfig(rel_tol=rel_tol, abs_tol=abs_tol, snapshot_times=tuple(taus))
    return evolve(g, p0, cfg)


# ---------------------------------------------------------------------------
# convergence


REFERENCES = ("R", "Pbar")


def run_convergence(
    Ns: Sequence[int],
    gamma: float = 0.0,
    grid: TauGridSpec = DEFAULT_GRID,
    params: ClosedFormParams = DEFAULT_PARAMS,
    reference: str = "R",
    joint: bool | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    workers: int = 1,
) -> ExperimentResult:
    """One-norm distance between the exact solution and a closed form over time.

    ``reference="R"`` compares with the piecewise solution (its loss version
    when the triangle is used); ``"Pbar"`` with the literature continuum
    form, pure ladder only.  ``joint=True`` with ``gamma=0`` runs the loss
    machinery on a loss-free problem.
    """
    if reference not in REFERENCES:
        raise ValueError(f"reference must be one of {REFERENCES}, got {reference!r}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    joint = gamma > 0 if joint is None else joint
    if reference == "Pbar" and joint:
        raise ValueError("the continuum reference exists only on the pure ladder")
    Ns = [int(N) for N in Ns]
    if not Ns:
        raise ValueError("Ns must be nonempty")
    for N in Ns:
        check_budget(N, joint)

    def one(N):
        taus = grid.grid(N, params)
        snaps = exact_trajectory(N, taus, gamma, joint, rel_tol, abs_tol)
        rows = []
        for s in snaps:
            if reference == "Pbar":
                ref = eval_Pbar(N, s.tau, params.lam)
            elif joint:
                ref = eval_R_loss(N, gamma, s.tau, params)
            else:
                ref = eval_R(N, s.tau, params)
            ref = ref.to_linear()
            err = one_norm_distance(s.dist, ref)
            rows.append([N, s.tau, math.exp(s.tau) / N, err, s.dist.one_norm()])
        return rows

    per_N = _map_ordered(one, Ns, workers)
    rows = [row for block in per_N for row in block]
    summary = {
        "max_error": {str(N): max(r[3] for r in block) for N, block in zip(Ns, per_N)},
        "max_drift": max(abs(r[4] - 1.0) for r in rows),
    }
    return ExperimentResult(
        name="convergence",
        parameters={
            "Ns": Ns,
            "gamma": gamma,
            "reference": reference,
            "joint": joint,
            "grid": asdict(grid),
            "delta0": params.delta0,
            "delta1": params.delta1,
            "lam": params.lam,
            "rel_tol": rel_tol,
            "abs_tol": abs_tol,
        },
        columns=["N", "tau", "T", "error", "one_norm"],
        rows=rows,
        summary=summary,
        metadata=_metadata(),
    )


# ---------------------------------------------------------------------------
# universal curve


PEAK_BRACKET = (1.0, 1.4, 2.0)


def find_peak(tol: float = 1e-6) -> tuple[float, float, float]:
    """``(T*, rho*, mu*)`` at the maximum of the continuum radiance."""
    res = minimize_scalar(
        lambda T: -continuum_observables(T)[1], bracket=PEAK_BRACKET, method="golden", tol=tol
    )
    T = float(res.x)
    mu, rho = continuum_observables(T)
    return T, rho, mu


def run_universal_curve(T_grid) -> ExperimentResult:
    T = np.asarray(T_grid, dtype=float)
    if T.ndim != 1 or T.size == 0 or np.any(~(T > 0)):
        raise ValueError("T grid must be a nonempty 1-D array of positive values")
    mu, rho = continuum_observables(T)
    T_star, rho_star, mu_star = find_peak()
    return ExperimentResult(
        name="universal_curve",
        parameters={"T_min": float(T.min()), "T_max": float(T.max()), "points": int(T.size)},
        columns=["T", "mu", "rho"],
        rows=[[float(a), float(b), float(c)] for a, b, c in zip(T, mu, rho)],
        summary={"T_peak": T_star, "rho_peak": rho_star, "mu_peak": mu_star},
        metadata=_metadata(),
    )


def finite_N_curve(N: int, T_grid, rel_tol: float = DEFAULT_REL_TOL) -> ExperimentResult:
    """Exact ``mu`` and ``rho`` of the pure ladder at ``tau = ln(N T)``, next to the continuum."""
    T = np.asarray(T_grid, dtype=float)
    taus = np.log(N * T)
    if np.any(taus < 0):
        raise ValueError("T grid must satisfy T >= 1/N")
    snaps = exact_trajectory(N, taus, rel_tol=rel_tol)
    mu_c, rho_c = continuum_observables(T)
    rows = []
    for s, t, a, b in zip(snaps, T, mu_c, rho_c):
        mu, rho = pure_observables(s.dist)
        rows.append([float(t), s.tau, mu, rho, float(a), float(b)])
    return ExperimentResult(
        name="finite_N_curve",
        parameters={"N": N, "rel_tol": rel_tol},
        columns=["T", "tau", "mu", "rho", "mu_continuum", "rho_continuum"],
        rows=rows,
        metadata=_metadata(),
    )


# ---------------------------------------------------------------------------
# pulse timing


def run_pulse_timing(
    N: int, step: float = 0.01, window: float = 3.0, rel_tol: float = DEFAULT_REL_TOL
) -> ExperimentResult:
    """Time of maximal exact radiance, from a uniform grid plus a parabolic fit.

    ``summary["tau_peak"]`` is the answer; ``t_peak`` is the same in unscaled
    time and ``offset`` is ``tau_peak - ln N``.
    """
    check_budget(N, joint=False)
    taus = np.arange(0.0, math.log(N) + window, step)
    snaps = exact_trajectory(N, taus, rel_tol=rel_tol)
    obs = [pure_observables(s.dist) for s in snaps]
    rho = np.array([o[1] for o in obs])
    k = int(np.argmax(rho))
    tau_peak = float(taus[k])
    if 0 < k < len(taus) - 1:
        y0, y1, y2 = rho[k - 1 : k + 2]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            tau_peak += step * 0.5 * (y0 - y2) / denom
    return ExperimentResult(
        name="pulse_timing",
        parameters={"N": N, "step": step, "window": window, "rel_tol": rel_tol},
        columns=["tau", "mu", "rho"],
        rows=[[float(t), mu, r] for t, (mu, r) in zip(taus, obs)],
        summary={
            "tau_peak": tau_peak,
            "t_peak": tau_peak / N,
            "offset": tau_peak - math.log(N),
            "rho_peak": float(rho[k]),
        },
        metadata=_metadata(),
    )


# ---------------------------------------------------------------------------
# threshold


# one-sided second derivative, error O(h^3)
_FD_STENCIL = np.array([35.0, -104.0, 114.0, -56.0, 11.0]) / 12.0


def fd_initial_curvature(N: int, gamma: float, h_t: float = 1e-4, rel_tol: float = 1e-13) -> float:
    """``d^2 mu/dt^2`` at ``t = 0`` from finite differences of the exact evolution.

    ``h_t`` is the stencil spacing in unscaled time.  The result is converted
    from the ``tau`` derivative by the factor ``N^2``.
    """
    h = h_t * N
    taus = h * np.arange(5)
    snaps = exact_trajectory(N, taus, gamma, joint=True, rel_tol=rel_tol, abs_tol=1e-16)
    mu = np.array([sample(s.dist, gamma).mu for s in snaps])
    return float(_FD_STENCIL @ mu) / h**2 * N**2


def run_threshold_scan(gammas: Sequence[float], tol: float = 1e-3, h_t: float = 1e-4) -> ExperimentResult:
    """Smallest ``N`` whose initial curvature is no longer positive, for each ``gamma``.

    At ``N`` below threshold the curvature is positive and the emission peaks
    at ``t = 0``.  Exactly at an integer threshold it vanishes, so the
    comparison is ``curvature <= tol``.
    """
    rows = []
    summary = {}
    for gamma in gammas:
        gamma = float(gamma)
        predicted = math.ceil(threshold_N(gamma) - 1e-12)
        check_budget(predicted + 1, joint=True)
        found = None
        for N in range(1, predicted + 2):
            c = fd_initial_curvature(N, gamma, h_t)
            rows.append([gamma, N, c, initial_curvature(N, gamma), exact_initial_curvature(N, gamma)])
            if c <= tol:
                found = N
                break
        summary[repr(gamma)] = {"empirical": found, "predicted": predicted}
    return ExperimentResult(
        name="threshold_scan",
        parameters={"gammas": [float(g) for g in gammas], "tol": tol, "h_t": h_t},
        columns=["gamma", "N", "curvature_fd", "curvature_quoted", "curvature_exact"],
        rows=rows,
        summary=summary,
        metadata=_metadata(),
    )


# ---------------------------------------------------------------------------
# incoherent photon count


def run_nloss(
    N: int, gamma: float, points: int = 2001, span: float = 4.0, rel_tol: float = DEFAULT_REL_TOL
) -> ExperimentResult:
    """Integral of the incoherent emission rate over ``[0, span ln N]`` (Simpson)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    check_budget(N, joint=True)
    taus = np.linspace(0.0, span * math.log(N), points)
    if gamma == 0:
        rate = np.zeros_like(taus)
        dark = np.zeros_like(taus)
    else:
        snaps = exact_trajectory(N, taus, gamma, joint=True, rel_tol=rel_tol)
        obs = [sample(s.dist, gamma, s.tau) for s in snaps]
        rate = np.array([o.incoherent_rate for o in obs])
        dark = np.array([o.dark_mean for o in obs])
    measured = float(simpson(rate, x=taus))
    formula = n_loss_formula(N, gamma)
    return ExperimentResult(
        name="nloss",
        parameters={"N": N, "gamma": gamma, "points": points, "span": span, "rel_tol": rel_tol},
        columns=["tau", "incoherent_rate", "dark_mean"],
        rows=[[float(t), float(a), float(b)] for t, a, b in zip(taus, rate, dark)],
        summary={
            "measured": measured,
            "formula": formula,
            "ratio": measured / formula if formula > 0 else math.nan,
            "dark_remaining": float(dark[-1]),
        },
        metadata=_metadata(),
    )


# ---------------------------------------------------------------------------
# persistence


FORMATS = ("csv", "json")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_results(result: ExperimentResult, path, format: str = "csv") -> Path:
    """Write ``result`` as CSV (rows only) or JSON (everything).

    CSV floats use 17 significant digits; JSON uses the shortest repr that
    round-trips, so both reproduce the stored values exactly.
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    if not result.rows:
        raise ValueError("refusing to write a result without rows")
    path = Path(path)
    try:
        if format == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(result.columns)
                for row in result.rows:
                    w.writerow([_fmt(v) for v in row])
        else:
            payload = _jsonable(asdict(result))
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"could not write {format} results to {path}: {exc}") from exc
    return path


def read_json_result(path) -> ExperimentResult:
    data = json.loads(Path(path).read_text())
    return ExperimentResult(**data)
