"""Time evolution of the rate equations.

:func:`evolve` is an adaptive Dormand-Prince 5(4) integrator with continuous
output; :func:`evolve_dense_oracle` exponentiates the dense generator and is
only meant as an independent check for small state spaces.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .ladder import LINEAR, JointDistribution, PureDistribution, triangle
from .rates import Generator

log = logging.getLogger(__name__)

Distribution = Union[PureDistribution, JointDistribution]


class IntegrationError(RuntimeError):
    """The integrator could not meet its tolerances."""


class InstabilityError(IntegrationError):
    """A probability went negative beyond the absolute tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_step: float = math.inf
    snapshot_times: Sequence[float] = (0.0,)

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        times = tuple(float(t) for t in self.snapshot_times)
        if not times:
            raise ValueError("at least one snapshot time is required")
        if times[0] < 0 or any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot_times must be nondecreasing and start at >= 0")
        object.__setattr__(self, "snapshot_times", times)


@dataclass(frozen=True)
class Snapshot:
    """State at ``tau``.

    ``error_bound`` is the accumulated one-norm of the embedded local error
    estimates up to this time.  The propagator is contractive in the one-norm,
    so this bounds the global error as long as the estimates are honest.
    """

    tau: float
    dist: Distribution
    error_bound: float = 0.0
    steps: int = 0


# Dormand-Prince 5(4) tableau

_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array(
    [71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# continuous extension: y(t + th) = y + h K^T (_P @ [th, th^2, th^3, th^4])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# DP5 real-axis stability ends near -3.3; stay well inside
_STIFF_CAP = 2.0


def _vector_of(g: Generator, p0) -> np.ndarray:
    expected = JointDistribution if g.joint else PureDistribution
    if isinstance(p0, (PureDistribution, JointDistribution)):
        if not isinstance(p0, expected) or p0.N != g.N:
            raise ValueError(
                f"initial state ({type(p0).__name__}, N={p0.N}) does not live on the "
                f"generator's space ({expected.__name__}, N={g.N})"
            )
        return np.array(p0.linear(), dtype=float)
    y = np.array(p0, dtype=float)
    if y.shape != (g.size,):
        raise ValueError(f"initial vector has shape {y.shape}, expected ({g.size},)")
    return y


def _wrap(g: Generator, y: np.ndarray) -> Distribution:
    cls = JointDistribution if g.joint else PureDistribution
    return cls(g.N, y, LINEAR, normalized=g.conserving)


def _clamped(y: np.ndarray, abs_tol: float, tau: float) -> np.ndarray:
    lo = y.min()
    if lo < -abs_tol:
        raise InstabilityError(
            f"probability {lo:.3e} below -abs_tol={abs_tol:g} at tau={tau:.6g}"
        )
    return np.maximum(y, 0.0) if lo < 0 else y.copy()


def evolve(g: Generator, p0, cfg: SolverConfig) -> list[Snapshot]:
    """Integrate ``dp/dtau = G p`` from ``p0`` and return states at ``cfg.snapshot_times``.

    The step is capped at ``2 / max outflow`` so the explicit scheme stays
    stable.  Snapshots come from the continuous extension, so they do not
    influence step selection.
    """
    y = _vector_of(g, p0)
    if np.any(y < 0):
        raise ValueError("initial probabilities must be nonnegative")
    times = cfg.snapshot_times
    t_end = times[-1]
    rate = g.max_outflow
    h_max = min(cfg.max_step, _STIFF_CAP / rate if rate > 0 else math.inf)

    out: list[Snapshot] = []
    i = 0
    while i < len(times) and times[i] == 0.0:
        out.append(Snapshot(0.0, _wrap(g, y.copy())))
        i += 1
    if i == len(times):
        return out

    t = 0.0
    K = np.empty((7, y.size))
    K[0] = g.apply(y)
    h = min(h_max, t_end, 0.01 / max(rate, 1.0))
    err_bound = 0.0
    steps = rejected = 0
    while i < len(times):
        h = min(h, t_end - t)
        if h <= 1e-14 * max(1.0, t):
            raise IntegrationError(f"step size underflow at tau={t:.6g} (h={h:.3e})")
        for s in range(1, 7):
            K[s] = g.apply(y + h * (np.asarray(_A[s]) @ K[:s]))
        y_new = y + h * (_B[:6] @ K[:6])
        err = h * (_E @ K)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        # An accepted step must also keep every entry above half the negativity
        # budget; otherwise shrink as if the error test had failed.
        lo = float(y_new.min())
        if lo < -0.5 * cfg.abs_tol:
            err_norm = max(err_norm, 2.0 * -lo / cfg.abs_tol)
        if err_norm > 1.0:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
            continue

        steps += 1
        err_bound += float(np.sum(np.abs(err)))
        t_new = t + h
        if i < len(times) and times[i] <= t_new:
            Q = K.T @ _P
            while i < len(times) and times[i] <= t_new:
                if times[i] >= t_new:
                    snap = y_new
                else:
                    th = (times[i] - t) / h
                    snap = y + h * (Q @ np.array([th, th * th, th**3, th**4]))
                out.append(
                    Snapshot(times[i], _wrap(g, _clamped(snap, cfg.abs_tol, times[i])), err_bound, steps)
                )
                i += 1
        y = y_new
        t = t_new
        if y.min() < -cfg.abs_tol:
            raise InstabilityError(
                f"probability {y.min():.3e} below -abs_tol={cfg.abs_tol:g} at tau={t:.6g}"
            )
        K[0] = K[6]
        factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
        h = min(h * factor, h_max)
    log.debug("evolve N=%d %s: %d steps, %d rejected", g.N, g.family.tag.value, steps, rejected)
    return out


MAX_DENSE_STATES = 4096


def evolve_dense_oracle(g: Generator, p0, tau: float) -> Distribution:
    """``expm(G tau) @ p0`` with a dense matrix exponential (Pade, scaling and squaring)."""
    if g.size > MAX_DENSE_STATES:
        raise ValueError(f"{g.size} states is too many for the dense oracle (max {MAX_DENSE_STATES})")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    y = _vector_of(g, p0)
    if tau == 0:
        return _wrap(g, y)
    y = scipy.linalg.expm(g.to_dense() * tau) @ y
    # round-off negatives around 1e-17 are not physical
    return _wrap(g, np.maximum(y, 0.0))


def write_snapshots_csv(snapshots: Sequence[Snapshot], path) -> None:
    """Long-format dump with header ``tau, n[, r], p``."""
    path = Path(path)
    if not snapshots:
        raise ValueError("no snapshots to write")
    joint = isinstance(snapshots[0].dist, JointDistribution)
    N = snapshots[0].dist.N
    if joint:
        n_lab, r_lab = triangle(N)
    else:
        n_lab = np.arange(N + 1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "n", "r", "p"] if joint else ["tau", "n", "p"])
        for s in snapshots:
            p = s.dist.linear()
            tau = f"{s.tau:.17g}"
            for k in range(p.size):
                if joint:
                    w.writerow([tau, int(n_lab[k]), int(r_lab[k]), f"{p[k]:.17g}"])
                else:
                    w.writerow([tau, int(n_lab[k]), f"{p[k]:.17g}"])
