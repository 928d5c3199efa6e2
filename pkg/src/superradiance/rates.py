"""Transition-rate generators for the pure ladder and the lossy triangle.

All rates are in rescaled time ``tau = N t``.  A generator ``G`` acts on a
probability vector as ``dp/dtau = G p``; column ``s`` of ``G`` holds the
outgoing arcs of state ``s`` and ``-outflow[s]`` on the diagonal.

Channels of the lossy triangle, seen from the source state (n, r):

* ``"decay"``  (n, r) -> (n - 1, r)      (Gamma^(2))
* ``"dark"``   (n, r) -> (n - 2, r + 1)  (Gamma^(3))
* ``"revive"`` (n, r) -> (n, r - 1)      (Gamma^(4))

with total outflow Gamma^(1).  Every channel removes exactly one excitation
``n + r``.  The pure ladder has the single channel ``"decay"``.
"""

from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

from .ladder import _check_atom_count, joint_dim, triangle


class Family(str, enum.Enum):
    PURE_EXACT = "PureExact"
    PURE_EARLY = "PureEarly"
    PURE_LATE = "PureLate"
    LOSS_EXACT = "LossExact"
    LOSS_EARLY = "LossEarly"
    LOSS_APPROX = "LossApprox"
    LOSS_LATE = "LossLate"

    @property
    def joint(self) -> bool:
        return self.value.startswith("Loss")


@dataclass(frozen=True)
class RateFamily:
    """A rate set together with the loss ratio ``gamma`` (ignored for pure sets)."""

    tag: Family
    gamma: float = 0.0

    def __post_init__(self):
        try:
            tag = Family(self.tag)
        except ValueError:
            raise ValueError(f"unknown rate family {self.tag!r}") from None
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "gamma", 0.0 if not tag.joint else gamma)

    @property
    def joint(self) -> bool:
        return self.tag.joint


CHANNELS = ("decay", "dark", "revive")
_SHIFT = {"decay": (-1, 0), "dark": (-2, 1), "revive": (0, -1)}


def _ratio(num, den):
    # Numerators vanish wherever the denominators do; short-circuit to exact 0.
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=(num != 0))
    return out


def pure_rates(N: int, tag: Family, n) -> np.ndarray:
    """Decay rate out of ladder state ``n`` for a pure rate set."""
    n = np.asarray(n, dtype=float)
    if tag is Family.PURE_EXACT:
        return n * (N - n + 1) / N
    if tag is Family.PURE_EARLY:
        return N - n + 1.0
    if tag is Family.PURE_LATE:
        return n.copy()
    raise ValueError(f"{tag} is not a pure rate family")


def loss_rates(N: int, tag: Family, gamma: float, n, r) -> dict[str, np.ndarray]:
    """Closed-form rates of a lossy rate set at states ``(n, r)``.

    Returns a dict with ``"outflow"`` (Gamma^(1)) and one entry per channel.
    The values are the formulas as written, including channels whose target
    would leave the triangle; :func:`build_generator` drops those arcs.
    """
    n = np.asarray(n, dtype=float)
    r = np.asarray(r, dtype=float)
    M = N - 2 * r
    collective = n * (M - n + 1) / N
    zero = np.zeros(np.broadcast(n, r).shape)
    if tag is Family.LOSS_EXACT:
        g = gamma / N
        out = collective + g * (n + r)
        decay = collective + g * _ratio(n * (N + 2) * (M - n + 1), M * (M + 2))
        # (N - 2r + r + 1) printed unreduced; equals N - r + 1
        dark = g * _ratio(n * (n - 1) * (N - r + 1), M * (M + 1))
        revive = g * _ratio((M - n + 1) * (M - n + 2) * r, (M + 2) * (M + 1))
    elif tag is Family.LOSS_EARLY:
        out = M - n + 1 + gamma + zero
        decay = M - n + 1 + zero
        dark = gamma + zero
        revive = zero
    elif tag is Family.LOSS_APPROX:
        out = collective + gamma * n / N
        decay = collective + gamma * n * (N - n) / N**2
        dark = gamma * n**2 / N**2
        revive = zero
    elif tag is Family.LOSS_LATE:
        out = n + gamma * r / N
        decay = n + zero
        dark = zero
        revive = gamma * r / N + zero
    else:
        raise ValueError(f"{tag} is not a loss rate family")
    return {"outflow": out, "decay": decay, "dark": dark, "revive": revive}


class Arc(NamedTuple):
    channel: str
    source: np.ndarray
    target: np.ndarray
    rate: np.ndarray


class Transition(NamedTuple):
    source_n: int
    source_r: int
    target_n: int
    target_r: int
    rate: float
    channel: str


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Generator:
    """Sparse rate matrix on a ladder or triangle state space.

    ``channels`` keeps the formula value of every channel on every state;
    ``arcs`` holds only the arcs whose targets exist and whose rates are
    nonzero.  For the approximate rate sets (``PureEarly``, ``LossEarly``,
    ``LossApprox``) some formula rates point out of the state space; that
    probability leaks, which is why ``outflow`` is stored separately.
    """

    N: int
    family: RateFamily
    outflow: np.ndarray
    channels: dict
    arcs: tuple

    @property
    def joint(self) -> bool:
        return self.family.joint

    @property
    def size(self) -> int:
        return self.outflow.shape[0]

    @property
    def max_outflow(self) -> float:
        return float(self.outflow.max(initial=0.0))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Return ``G @ p``."""
        return self._csr @ p

    def apply_stencil(self, p: np.ndarray) -> np.ndarray:
        """``G @ p`` straight from the arcs, without the sparse matrix."""
        out = -self.outflow * p
        for arc in self.arcs:
            # targets are distinct within a channel, so fancy += is safe
            out[arc.target] += arc.rate * p[arc.source]
        return out

    @functools.cached_property
    def _csr(self) -> sp.csr_matrix:
        return self.to_sparse()

    def leak(self) -> np.ndarray:
        """Per-state outflow not carried by any emitted arc."""
        kept = np.zeros(self.size)
        for arc in self.arcs:
            kept[arc.source] += arc.rate
        return self.outflow - kept

    @property
    def conserving(self) -> bool:
        scale = max(1.0, self.max_outflow)
        return bool(np.max(np.abs(self.leak())) <= 1e-12 * scale)

    def to_sparse(self) -> sp.csr_matrix:
        rows = [np.arange(self.size)] + [a.target for a in self.arcs]
        cols = [np.arange(self.size)] + [a.source for a in self.arcs]
        vals = [-self.outflow] + [a.rate for a in self.arcs]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        if self.joint:
            return triangle(self.N)
        n = np.arange(self.N + 1)
        return n, np.zeros_like(n)

    def transitions(self) -> Iterator[Transition]:
        n, r = self.labels()
        for arc in self.arcs:
            for s, t, k in zip(arc.source, arc.target, arc.rate):
                yield Transition(int(n[s]), int(r[s]), int(n[t]), int(r[t]), float(k), arc.channel)

    def write_csv(self, path) -> None:
        """Debug dump, one row per arc: source_n, source_r, target_n, target_r, rate."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_n", "source_r", "target_n", "target_r", "rate"])
            for t in self.transitions():
                w.writerow([t.source_n, t.source_r, t.target_n, t.target_r, f"{t.rate:.17g}"])


def build_generator(N: int, family: RateFamily) -> Generator:
    """Materialize the rate matrix of ``family`` for ``N`` atoms."""
    N = _check_atom_count(N)
    if not isinstance(family, RateFamily):
        raise TypeError(f"expected a RateFamily, got {family!r}")
    tag = family.tag

    if not tag.joint:
        n = np.arange(N + 1)
        rate = pure_rates(N, tag, n)
        src = n[1:]
        keep = rate[src] != 0
        arcs = (Arc("decay", _frozen(src[keep]), _frozen(src[keep] - 1), _frozen(rate[src][keep])),)
        return Generator(N, family, _frozen(rate), {"decay": _frozen(rate)}, arcs)

    n, r = triangle(N)
    rates = loss_rates(N, tag, family.gamma, n, r)
    R = N // 2
    arcs = []
    for ch in CHANNELS:
        dn, dr = _SHIFT[ch]
        tn, tr = n + dn, r + dr
        ok = (tn >= 0) & (tr >= 0) & (tr <= R) & (tn <= N - 2 * tr) & (rates[ch] != 0)
        src = np.flatnonzero(ok)
        # flat index of (tn, tr), row-major in r
        tgt = tr[ok] * (N + 1) - tr[ok] * (tr[ok] - 1) + tn[ok]
        arcs.append(Arc(ch, _frozen(src), _frozen(tgt), _frozen(rates[ch][ok])))
    channels = {ch: _frozen(rates[ch]) for ch in CHANNELS}
    assert rates["outflow"].shape == (joint_dim(N),)
    return Generator(N, family, _frozen(rates["outflow"]), channels, tuple(arcs))


def verify_conservation(g: Generator) -> float:
    """Max over states of ``|outflow - sum of channel formula rates|``."""
    total = np.zeros(g.size)
    for v in g.channels.values():
        total = total + v
    return float(np.max(np.abs(g.outflow - total)))
