"""Closed-form distributions for the pure and the lossy Dicke ladder.

Everything is evaluated in the log domain and returned as
:class:`~superradiance.ladder.PureDistribution` /
:class:`~superradiance.ladder.JointDistribution` with ``domain="log"``.  The
closed forms are not exactly normalized and carry ``normalized=False``.

Time is the rescaled ``tau = N t`` throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .ladder import LOG, JointDistribution, PureDistribution, _check_atom_count, triangle
from .specfun import log_binomial, log_sum_exp


@dataclass(frozen=True)
class ClosedFormParams:
    """Matching times of the piecewise solution.

    ``tau0 = delta0 ln N`` ends the early (linearized) phase and
    ``tau1 = (1 + delta1) ln N`` starts the late one.  ``lam`` is the offset
    of the literature continuum solution.
    """

    delta0: float = 0.75
    delta1: float = 0.4
    lam: int = 0

    def __post_init__(self):
        if not 0 < self.delta0 < 1:
            raise ValueError(f"delta0 must lie in (0, 1), got {self.delta0}")
        if not 0 < self.delta1 < 0.5:
            raise ValueError(f"delta1 must lie in (0, 1/2), got {self.delta1}")
        if self.lam not in (0, 1):
            raise ValueError(f"lam must be 0 or 1, got {self.lam}")

    def tau0(self, N: int) -> float:
        return self.delta0 * math.log(N)

    def tau1(self, N: int) -> float:
        return (1 + self.delta1) * math.log(N)


DEFAULT_PARAMS = ClosedFormParams()


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau >= 0:
        raise ValueError(f"tau must be >= 0, got {tau!r}")
    return tau


def _log1m_exp(x: float) -> float:
    """``log(1 - exp(-x))`` for ``x >= 0``."""
    if x == 0:
        return -math.inf
    return math.log(-math.expm1(-x))


def eval_Q(N: int, tau: float) -> PureDistribution:
    """Early-time solution ``Q_n = e^{-tau} (1 - e^{-tau})^{N-n}``."""
    N = _check_atom_count(N)
    tau = _check_tau(tau)
    n = np.arange(N + 1)
    logq = -tau + xlog1py(N - n, -math.exp(-tau))
    return PureDistribution(N, logq, LOG, normalized=False)


def eval_Pbar(N: int, tau: float, lam: int = 0) -> PureDistribution:
    """Literature continuum solution ``(N/n)^2 exp[-tau - e^{-tau} N (N - n + lam)/n]``."""
    N = _check_atom_count(N)
    tau = _check_tau(tau)
    if lam not in (0, 1):
        raise ValueError(f"lam must be 0 or 1, got {lam}")
    n = np.arange(1, N + 1, dtype=float)
    logp = np.empty(N + 1)
    logp[0] = -np.inf
    logp[1:] = 2 * np.log(N / n) - tau - math.exp(-tau) * N * (N - n + lam) / n
    return PureDistribution(N, logp, LOG, normalized=False)


def pbar_norm_limit(tau: float, lam: int = 0) -> float:
    """Large-N limit of the one-norm of :func:`eval_Pbar` at fixed ``tau > 0``."""
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau!r}")
    a = math.exp(-tau)
    return math.exp(-tau - lam * a) / -math.expm1(-a)


def _log_R_early(N: int, tau: float) -> np.ndarray:
    n = np.arange(1, N + 1, dtype=float)
    out = np.empty(N + 1)
    out[0] = -np.inf
    out[1:] = 2 * np.log(N / n) - tau + xlog1py(N * (N / n - 1), -math.exp(-tau))
    return out


_LB_CACHE_MAX = 2048
_lb_cache = {"size": -1, "matrix": None}


def _log_binomial_matrix(M: int) -> np.ndarray:
    """``[n, m] -> log C(m, n)`` for ``0 <= n <= m <= M``, ``-inf`` below.

    One table is kept and sliced, since every caller needs a leading block.
    """
    if M <= _lb_cache["size"]:
        return _lb_cache["matrix"][: M + 1, : M + 1]
    m = np.arange(M + 1)
    nn, mm = np.meshgrid(m, m, indexing="ij")
    upper = mm >= nn
    out = np.full(nn.shape, -np.inf)
    out[upper] = log_binomial(mm[upper], nn[upper])
    out.setflags(write=False)
    if M <= _LB_CACHE_MAX:
        _lb_cache.update(size=M, matrix=out)
    return out


def _log_thin(logv: np.ndarray, dt: float) -> np.ndarray:
    """Binomial thinning of counts with survival ``e^{-dt}``, in log space.

    ``w_n = sum_{m >= n} C(m, n) e^{-n dt} (1 - e^{-dt})^{m - n} v_m``; this is
    the propagator of independent unit-rate decays, rewritten from
    ``e^{-m dt} (e^{dt} - 1)^{m - n}`` so that nothing overflows.
    """
    M = logv.shape[0] - 1
    if dt == 0:
        return logv.copy()
    k = np.arange(M + 1)
    gap = k[None, :] - k[:, None]
    with np.errstate(invalid="ignore"):
        terms = (
            _log_binomial_matrix(M)
            - dt * k[:, None]
            + np.where(gap > 0, gap * _log1m_exp(dt), 0.0)
            + logv[None, :]
        )
    return log_sum_exp(terms, axis=1)


def eval_R(N: int, tau: float, params: ClosedFormParams = DEFAULT_PARAMS) -> PureDistribution:
    """Piecewise solution valid at all times.

    ``R^<_n = (N/n)^2 e^{-tau} (1 - e^{-tau})^{N(N/n - 1)}`` up to ``tau1`` and
    its propagation under the late linearized rates ``gamma_n -> n`` after.
    """
    N = _check_atom_count(N)
    tau = _check_tau(tau)
    t1 = params.tau1(N)
    if tau <= t1:
        return PureDistribution(N, _log_R_early(N, tau), LOG, normalized=False)
    return PureDistribution(N, _log_thin(_log_R_early(N, t1), tau - t1), LOG, normalized=False)


def eval_universal(x, T):
    """N-independent shape ``N p(x, T) = exp((1 - 1/x)/T) / (T x^2)``."""
    x = np.asarray(x, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(x <= 0) or np.any(x > 1):
        raise ValueError("x must lie in (0, 1]")
    if np.any(T <= 0):
        raise ValueError("T must be > 0")
    with np.errstate(under="ignore"):
        out = np.exp((1 - 1 / x) / T) / (T * x**2)
    return float(out) if out.ndim == 0 else out


def log_F(r, x, gamma: float):
    """Log of the Poisson weight ``e^{-gamma x} (gamma x)^r / r!``."""
    r = np.asarray(r)
    x = np.asarray(x, dtype=float)
    if np.any(r < 0) or np.any(x < 0) or gamma < 0:
        raise ValueError("r, x and gamma must be nonnegative")
    mean = gamma * x
    out = -mean + xlogy(r, mean) - gammaln(r + 1)
    return float(out) if out.ndim == 0 else out


def eval_F(r, x, gamma: float):
    """Poisson distribution of dark excitations after effective time ``x``."""
    with np.errstate(under="ignore"):
        return np.exp(log_F(r, x, gamma))


def eval_T(N: int, n, tau: float, tau0: float = 0.0):
    """Effective loss time of ladder state ``n`` at time ``tau``.

    ``T_n = tau + n/N - n/(n + e^{tau0-tau}(N - n)) + log[n/N + e^{tau0-tau}(1 - n/N)]``.
    With the default ``tau0 = 0`` this is the form used in the loss solution;
    nonzero ``tau0`` gives the continuum-with-loss variant.  Clipped to
    ``[0, tau]`` against rounding.
    """
    N = _check_atom_count(N)
    tau = _check_tau(tau)
    n = np.asarray(n, dtype=float)
    if np.any(n < 0) or np.any(n > N):
        raise ValueError("n must lie in [0, N]")
    u = tau - tau0
    x = n / N
    decay = math.exp(-u)
    with np.errstate(divide="ignore"):
        log_bracket = np.logaddexp(np.log(x), -u + np.log1p(-x))
    frac = np.divide(n, n + decay * (N - n), out=np.zeros_like(n), where=(n > 0))
    out = np.clip(tau + x - frac + log_bracket, 0.0, tau)
    return float(out) if out.ndim == 0 else out


def _log_R_loss_early(N: int, gamma: float, tau: float, tau0: float) -> np.ndarray:
    n, r = triangle(N)
    logR = _log_R_early(N, tau)
    T = eval_T(N, np.arange(N + 1), tau, tau0)
    return logR[n + 2 * r] + log_F(r, T[n], gamma)


def eval_R_loss(
    N: int,
    gamma: float,
    tau: float,
    params: ClosedFormParams = DEFAULT_PARAMS,
    tau0: float = 0.0,
) -> JointDistribution:
    """Piecewise loss solution on the (n, r) triangle.

    Up to ``tau1``: ``R_{n+2r}(tau) F_r(T_n(tau))``.  After: independent
    binomial decay of ``n`` at unit rate and of ``r`` at rate ``gamma/N``,
    started from the early form at ``tau1``.  The double sum is done as two
    successive one-dimensional thinnings, O(N^3) overall.
    """
    N = _check_atom_count(N)
    tau = _check_tau(tau)
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    t1 = params.tau1(N)
    if tau <= t1:
        return JointDistribution(N, _log_R_loss_early(N, gamma, tau, tau0), LOG, normalized=False)

    dt = tau - t1
    n_lab, r_lab = triangle(N)
    R = N // 2
    start = np.full((R + 1, N + 1), -np.inf)
    start[r_lab, n_lab] = _log_R_loss_early(N, gamma, t1, tau0)

    thinned_n = np.full_like(start, -np.inf)
    for rp in range(R + 1):
        M = N - 2 * rp
        thinned_n[rp, : M + 1] = _log_thin(start[rp, : M + 1], dt)

    dr = gamma * dt / N
    out = np.full_like(start, -np.inf)
    if dr == 0:
        out = thinned_n
    else:
        # thinning in r at fixed n, over the rows where n is allowed
        for n in range(N + 1):
            rmax = (N - n) // 2
            out[: rmax + 1, n] = _log_thin(thinned_n[: rmax + 1, n], dr)
    return JointDistribution(N, out[r_lab, n_lab], LOG, normalized=False)
