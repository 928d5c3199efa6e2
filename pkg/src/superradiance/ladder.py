"""State spaces of the pure Dicke ladder and of the lossy (n, r) triangle.

The pure ladder is indexed by ``n`` in ``0..N``, the number of collective
excitations that can still be emitted.  With incoherent loss a second label
``r`` (dark excitations, ``r = N/2 - j``) appears and the states fill the
triangle ``0 <= r <= N//2``, ``0 <= n <= N - 2r``.  The triangle is stored
flat, row-major in ``r``: all ``n`` for ``r = 0`` first, then ``r = 1``, ...

A state (n, r) carries ``n + r`` excitations, i.e. the magnetic quantum number
is ``m = r + n - N/2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

LINEAR = "linear"
LOG = "log"
_DOMAINS = (LINEAR, LOG)


class LadderIndex(NamedTuple):
    n: int
    r: int


def _check_atom_count(N) -> int:
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)):
        raise TypeError(f"atom count must be an integer, got {N!r}")
    if N < 1:
        raise ValueError(f"atom count must be >= 1, got {N}")
    return int(N)


def joint_dim(N: int) -> int:
    """Number of (n, r) states for ``N`` atoms."""
    N = _check_atom_count(N)
    R = N // 2
    return (R + 1) * (N + 1) - R * (R + 1)


def _row_offset(N: int, r):
    # sum_{s<r} (N - 2s + 1)
    return r * (N + 1) - r * (r - 1)


def joint_index(N: int, n: int, r: int) -> int:
    """Flat position of (n, r) in the triangle."""
    N = _check_atom_count(N)
    if not (0 <= r <= N // 2 and 0 <= n <= N - 2 * r):
        raise IndexError(f"(n={n}, r={r}) is outside the triangle for N={N}")
    return int(_row_offset(N, r) + n)


def joint_decode(N: int, k: int) -> LadderIndex:
    """Inverse of :func:`joint_index`."""
    N = _check_atom_count(N)
    if not 0 <= k < joint_dim(N):
        raise IndexError(f"flat index {k} out of range for N={N}")
    n_arr, r_arr = triangle(N)
    return LadderIndex(int(n_arr[k]), int(r_arr[k]))


@lru_cache(maxsize=64)
def _triangle(N: int):
    r = np.concatenate([np.full(N - 2 * s + 1, s) for s in range(N // 2 + 1)])
    n = np.concatenate([np.arange(N - 2 * s + 1) for s in range(N // 2 + 1)])
    n.setflags(write=False)
    r.setflags(write=False)
    return n, r


def triangle(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(n, r)`` labelling every flat triangle position (read-only)."""
    return _triangle(_check_atom_count(N))


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class _Distribution:
    N: int
    values: np.ndarray
    domain: str = LINEAR
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "N", _check_atom_count(self.N))
        if self.domain not in _DOMAINS:
            raise ValueError(f"domain must be one of {_DOMAINS}, got {self.domain!r}")
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (self._size(),):
            raise ValueError(
                f"expected {self._size()} entries for N={self.N}, got shape {self.values.shape}"
            )
        if self.domain == LINEAR and np.any(self.values < 0):
            raise ValueError("linear-domain probabilities must be nonnegative")
        if self.domain == LOG and np.any(np.isnan(self.values)):
            raise ValueError("log-domain entries must not be NaN")

    def _size(self) -> int:
        raise NotImplementedError

    def linear(self) -> np.ndarray:
        """Entries in the linear domain (log ``-inf`` maps to exact 0)."""
        if self.domain == LINEAR:
            return self.values
        with np.errstate(under="ignore"):
            return _frozen(np.exp(self.values))

    def log(self) -> np.ndarray:
        if self.domain == LOG:
            return self.values
        with np.errstate(divide="ignore"):
            return _frozen(np.log(self.values))

    def to_linear(self):
        return type(self)(self.N, self.linear(), LINEAR, self.normalized)

    def to_log(self):
        return type(self)(self.N, self.log(), LOG, self.normalized)

    def one_norm(self) -> float:
        return float(np.sum(self.linear()))

    def check_normalized(self, tol: float = 1e-8) -> None:
        """Raise ``ValueError`` unless the entries sum to 1 within ``tol``."""
        total = self.one_norm()
        if abs(total - 1.0) > tol:
            raise ValueError(f"distribution is not normalized: sum = {total!r} (tol {tol:g})")


@dataclass(frozen=True)
class PureDistribution(_Distribution):
    """Probabilities ``P_n`` on the symmetric ladder, ``n = 0..N``."""

    def _size(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class JointDistribution(_Distribution):
    """Probabilities on the (n, r) triangle, flat row-major in ``r``."""

    def _size(self) -> int:
        return joint_dim(self.N)

    def __getitem__(self, nr) -> float:
        n, r = nr
        return float(self.linear()[joint_index(self.N, n, r)])

    def table(self) -> np.ndarray:
        """Dense ``(N//2 + 1, N + 1)`` array indexed ``[r, n]``, zero outside."""
        n, r = triangle(self.N)
        out = np.zeros((self.N // 2 + 1, self.N + 1))
        out[r, n] = self.linear()
        return out

    def marginal_n(self) -> np.ndarray:
        n, _ = triangle(self.N)
        return np.bincount(n, weights=self.linear(), minlength=self.N + 1)

    def marginal_r(self) -> np.ndarray:
        _, r = triangle(self.N)
        return np.bincount(r, weights=self.linear(), minlength=self.N // 2 + 1)

    def restrict_r0(self) -> PureDistribution:
        """The ``r = 0`` row as a (generally sub-normalized) pure distribution."""
        return PureDistribution(self.N, self.linear()[: self.N + 1], LINEAR, normalized=False)

    @classmethod
    def embed(cls, p: PureDistribution) -> "JointDistribution":
        """Place a pure distribution on the ``r = 0`` row."""
        out = np.zeros(joint_dim(p.N))
        out[: p.N + 1] = p.linear()
        return cls(p.N, out, LINEAR, p.normalized)


PURE_INVERTED = "pure_inverted"
JOINT_INVERTED = "joint_inverted"


def initial_state(N: int, kind: str = PURE_INVERTED):
    """All atoms excited: ``delta_{n,N}`` (and ``delta_{r,0}`` on the triangle)."""
    N = _check_atom_count(N)
    if kind == PURE_INVERTED:
        p = np.zeros(N + 1)
        p[N] = 1.0
        return PureDistribution(N, p)
    if kind == JOINT_INVERTED:
        p = np.zeros(joint_dim(N))
        p[joint_index(N, N, 0)] = 1.0
        return JointDistribution(N, p)
    raise ValueError(f"unknown initial state kind {kind!r}")


def state_space_size(N: int, joint: bool) -> int:
    return joint_dim(N) if joint else _check_atom_count(N) + 1
