"""Magnetization, radiance and incoherent-emission observables.

On the loss triangle a state (n, r) holds ``n + r`` excitations and its
collective decay strength is ``n (N - 2r - n + 1)``.  Hence
``mu = <n + r>/N`` and ``rho = <n (N - 2r - n + 1)>/N^2``.  On the pure ladder
these reduce to ``mu = <n>/N`` and ``rho = <gamma_n>/N``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Union

import numpy as np

from .ladder import JointDistribution, PureDistribution, triangle
from .specfun import E1_ASYMPTOTIC, E1_CUTOVER, EULER_GAMMA, exp_integral_e1_scaled, exp_integral_en_scaled

Distribution = Union[PureDistribution, JointDistribution]

NORM_TOL = 1e-8


class ObservableSample(NamedTuple):
    tau: float
    mu: float
    rho: float
    one_norm: float
    incoherent_rate: float
    dark_mean: float


def _checked(p: Distribution, tol: float) -> np.ndarray:
    total = p.one_norm()
    if p.normalized:
        p.check_normalized(tol)
    elif total > 1 + tol:
        raise ValueError(f"distribution has one-norm {total!r} > 1; not a physical state")
    return p.linear()


def pure_observables(p: PureDistribution, tol: float = NORM_TOL) -> tuple[float, float]:
    """``(mu, rho)`` of a ladder distribution."""
    if not isinstance(p, PureDistribution):
        raise TypeError("pure_observables expects a PureDistribution")
    P = _checked(p, tol)
    N = p.N
    n = np.arange(N + 1, dtype=float)
    mu = float(P @ n) / N
    rho = float(P @ (n * (N - n + 1))) / N**2
    return mu, rho


def joint_observables(
    p: JointDistribution, gamma: float, tau: float = math.nan, tol: float = NORM_TOL
) -> ObservableSample:
    """All observables of a triangle distribution; ``tau`` is only carried along."""
    if not isinstance(p, JointDistribution):
        raise TypeError("joint_observables expects a JointDistribution")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    P = _checked(p, tol)
    N = p.N
    n, r = triangle(N)
    exc = float(P @ (n + r))
    rho = float(P @ (n * (N - 2 * r - n + 1).astype(float))) / N**2
    return ObservableSample(
        tau=float(tau),
        mu=exc / N,
        rho=rho,
        one_norm=float(P.sum()),
        incoherent_rate=gamma * exc / N,
        dark_mean=float(P @ r),
    )


def sample(p: Distribution, gamma: float = 0.0, tau: float = math.nan, tol: float = NORM_TOL) -> ObservableSample:
    """:class:`ObservableSample` for either kind of distribution."""
    if isinstance(p, JointDistribution):
        return joint_observables(p, gamma, tau, tol)
    mu, rho = pure_observables(p, tol)
    return ObservableSample(float(tau), mu, rho, p.one_norm(), gamma * mu, 0.0)


def _continuum_rho(z: float, mu: float) -> float:
    if z <= E1_CUTOVER:
        return (1.0 + z) * mu - z
    if z < E1_ASYMPTOTIC:
        # same quantity via E2, E3; avoids subtracting two numbers close to z
        return 2.0 * exp_integral_en_scaled(3, z) - exp_integral_en_scaled(2, z)
    # sum_{j>=1} (-1)^{j+1} j j! / z^j
    total, fact, j = 0.0, 1.0, 1
    while True:
        fact *= j / z
        term = (-1) ** (j + 1) * j * fact
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total
        j += 1


def continuum_observables(T) -> tuple:
    """Large-N ``(mu, rho)`` as functions of ``T = e^tau / N``.

    With ``z = 1/T``: ``mu = z e^z E1(z)`` and ``rho = (1 + z) mu - z``.  For
    ``z > 1`` the radiance is evaluated as ``e^z [2 E3(z) - E2(z)]``, which is
    the same function without the cancellation.
    """
    T_arr = np.asarray(T, dtype=float)
    if np.any(~(T_arr > 0)):
        raise ValueError("T must be > 0")
    z = 1.0 / T_arr
    mu = z * exp_integral_e1_scaled(z)
    rho = np.vectorize(_continuum_rho, otypes=[float])(z, mu)
    if T_arr.ndim == 0:
        return float(mu), float(rho)
    return mu, rho


def one_norm_distance(a: Distribution, b: Distribution) -> float:
    """``sum |a_i - b_i|`` over a common state space."""
    if type(a) is not type(b) or a.N != b.N:
        raise ValueError(
            f"cannot compare {type(a).__name__}(N={a.N}) with {type(b).__name__}(N={b.N})"
        )
    return float(np.sum(np.abs(a.linear() - b.linear())))


def n_loss_formula(N: int, gamma: float) -> float:
    """Expected number of incoherently emitted photons, ``gamma [gamma_E + ln N + e^N E1(N)]``."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return 0.0
    return gamma * (EULER_GAMMA + math.log(N) + exp_integral_e1_scaled(float(N)))


def threshold_N(gamma: float) -> float:
    """Atom number ``gamma^2 + 2 gamma + 2`` above which the emission peak is delayed."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return gamma**2 + 2 * gamma + 2


def initial_curvature(N: int, gamma: float) -> float:
    """Literature value of ``d^2 mu / dt^2`` at ``t = 0``: ``gamma^2/2 + gamma - N/2 + 1``.

    This is half of what the rate equations give; see
    :func:`exact_initial_curvature`.  Both share the zero at
    ``N = threshold_N(gamma)``.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return gamma**2 / 2 + gamma - N / 2 + 1


def exact_initial_curvature(N: int, gamma: float) -> float:
    """``d^2 mu / dt^2`` at ``t = 0`` from the exact loss rates: ``gamma^2 + 2 gamma + 2 - N``.

    From the inverted state only the decay and dark channels are open, so two
    applications of the generator give this in closed form.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return gamma**2 + 2 * gamma + 2 - N
