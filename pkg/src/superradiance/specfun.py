"""Special functions: exponential integral E1 and log-domain helpers."""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061

# Series below this point, continued fraction above.
E1_CUTOVER = 1.0
# Asymptotic expansion beyond this point (the fraction meets subnormals near 1e308).
E1_ASYMPTOTIC = 1e4

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 10_000


def _e1_series(z: float) -> float:
    """E1 from its convergent power series; accurate for small ``z``."""
    total = 0.0
    term = 1.0
    k = 1
    while True:
        term *= -z / k
        contrib = term / k
        total += contrib
        if abs(contrib) <= _EPS * abs(total) or k > _MAXIT:
            break
        k += 1
    return -EULER_GAMMA - math.log(z) - total


def _en_cf_scaled(n: int, z: float) -> float:
    """``exp(z) E_n(z)`` from the continued fraction (modified Lentz), ``z > 1``."""
    b = z + n
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -float(i * (n - 1 + i))
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= _EPS:
            return h
    raise ArithmeticError(f"E{n} continued fraction did not converge at z={z!r}")


def _e1_cf_scaled(z: float) -> float:
    return _en_cf_scaled(1, z)


def _en_asymptotic_scaled(n: int, z: float) -> float:
    """``exp(z) E_n(z)`` from the asymptotic series; only for large ``z``."""
    total = 1.0
    term = 1.0
    k = 0
    while abs(term) > _EPS * abs(total):
        term *= -(n + k) / z
        total += term
        k += 1
    return total / z


def _e1_asymptotic_scaled(z: float) -> float:
    return _en_asymptotic_scaled(1, z)


def _check_positive(z: float) -> float:
    z = float(z)
    if not z > 0:
        raise ValueError(f"E1 requires z > 0, got {z!r}")
    return z


def _e1_scalar(z: float) -> float:
    z = _check_positive(z)
    if z <= E1_CUTOVER:
        return _e1_series(z)
    if z > 745.2:
        return 0.0
    return math.exp(-z) * _e1_cf_scaled(z)


def _e1_scaled_scalar(z: float) -> float:
    z = _check_positive(z)
    if z <= E1_CUTOVER:
        return math.exp(z) * _e1_series(z)
    if z >= E1_ASYMPTOTIC:
        return _e1_asymptotic_scaled(z)
    return _e1_cf_scaled(z)


def _vectorized(fn, z):
    if np.ndim(z) == 0:
        return fn(z)
    z = np.asarray(z, dtype=float)
    return np.array([fn(v) for v in z.ravel()]).reshape(z.shape)


def exp_integral_e1(z):
    """Exponential integral ``E1(z) = int_z^inf exp(-y)/y dy`` for ``z > 0``.

    Accepts scalars or arrays.  Underflows to 0 beyond ``z ~ 745``; use
    :func:`exp_integral_e1_scaled` there.
    """
    return _vectorized(_e1_scalar, z)


def exp_integral_e1_scaled(z):
    """``exp(z) * E1(z)``, finite for all positive ``z`` up to the float max."""
    return _vectorized(_e1_scaled_scalar, z)


def exp_integral_en_scaled(n: int, z):
    """``exp(z) E_n(z)`` for integer ``n >= 1`` and ``z > 0``.

    Small ``z`` uses the upward recurrence ``E_{k+1} = (e^{-z} - z E_k)/k``
    from E1, which is stable there; larger ``z`` uses the continued fraction
    or the asymptotic series.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"order must be an integer >= 1, got {n!r}")
    n = int(n)

    def one(v):
        v = _check_positive(v)
        if v <= E1_CUTOVER:
            s = _e1_scaled_scalar(v)
            for k in range(1, n):
                s = (1.0 - v * s) / k
            return s
        if v >= E1_ASYMPTOTIC:
            return _en_asymptotic_scaled(n, v)
        return _en_cf_scaled(n, v)

    return _vectorized(one, z)


# Stirling remainder ln n! - [(n + 1/2) ln n - n + ln(2 pi)/2], tabulated for
# small n and from its asymptotic series above.
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_STIRLERR_TABLE = np.array(
    [0.0]
    + [math.lgamma(j + 1) - (j + 0.5) * math.log(j) + j - _HALF_LOG_2PI for j in range(1, 16)],
    dtype=np.longdouble,
)


def _stirlerr(j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=np.int64)
    out = np.empty(j.shape, dtype=np.longdouble)
    small = j < 16
    out[small] = _STIRLERR_TABLE[j[small]]
    x = j[~small].astype(np.longdouble)
    x2 = x * x
    out[~small] = (
        1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - (1.0 / 1680 - 1.0 / (1188 * x2)) / x2) / x2) / x2
    ) / x
    return out


def log_binomial(m, k):
    """Natural log of the binomial coefficient ``C(m, k)``.

    Uses the Stirling-corrected form with the entropy term in extended
    precision, so the result is good to ~1 ulp even for ``m ~ 1e6``.  Exact 0
    for ``k`` in ``{0, m}``.  Vectorized over ``m`` and ``k``.
    """
    m_arr = np.asarray(m)
    k_arr = np.asarray(k)
    if not (np.issubdtype(m_arr.dtype, np.integer) and np.issubdtype(k_arr.dtype, np.integer)):
        if np.any(np.asarray(m_arr, float) % 1) or np.any(np.asarray(k_arr, float) % 1):
            raise ValueError("log_binomial requires integer arguments")
    m_arr, k_arr = np.broadcast_arrays(m_arr.astype(np.int64), k_arr.astype(np.int64))
    if np.any(k_arr < 0) or np.any(k_arr > m_arr):
        raise ValueError("log_binomial requires 0 <= k <= m")
    kk = np.minimum(k_arr, m_arr - k_arr)
    out = np.zeros(m_arr.shape, dtype=np.longdouble)
    live = kk > 0
    if np.any(live):
        mm = m_arr[live].astype(np.longdouble)
        a = kk[live].astype(np.longdouble)
        b = mm - a
        entropy = mm * np.log(mm) - a * np.log(a) - b * np.log(b)
        prefactor = 0.5 * np.log(mm / (a * b)) - np.longdouble(_HALF_LOG_2PI)
        corr = _stirlerr(m_arr[live]) - _stirlerr(kk[live]) - _stirlerr(m_arr[live] - kk[live])
        out[live] = entropy + prefactor + corr
    out = out.astype(float)
    return float(out) if out.ndim == 0 else out


def log_sum_exp(terms, axis=None):
    """``log(sum(exp(terms)))`` without overflow; exact ``-inf`` if all terms are."""
    t = np.asarray(terms, dtype=float)
    if t.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    peak = np.max(t, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(under="ignore", divide="ignore"):
        s = np.log(np.sum(np.exp(t - safe), axis=axis, keepdims=True)) + safe
    s = np.where(np.isneginf(peak), -np.inf, s)
    if axis is None:
        return float(s.reshape(()))
    return np.squeeze(s, axis=axis)
