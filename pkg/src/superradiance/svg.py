"""Minimal standalone SVG line plots.

Output depends only on the data and options, so the files diff cleanly.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

LOG_FLOOR = 1e-16

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _table_columns(table) -> dict:
    if hasattr(table, "columns") and hasattr(table, "rows"):
        cols = list(table.columns)
        data = np.array(table.rows, dtype=float).reshape(len(table.rows), len(cols))
        return {c: data[:, j] for j, c in enumerate(cols)}
    if isinstance(table, Mapping):
        return {k: np.asarray(v, dtype=float) for k, v in table.items()}
    raise TypeError("table must be an ExperimentResult-like object or a mapping of columns")


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    k = 0
    while start + k * step <= hi + 1e-9 * step:
        ticks.append(start + k * step)
        k += 1
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


class _Axis:
    def __init__(self, values: np.ndarray, log: bool, pix0: float, pix1: float):
        self.log = log
        v = np.log10(values) if log else values
        lo, hi = float(np.min(v)), float(np.max(v))
        if hi == lo:
            raise ValueError("degenerate axis range: all values are equal")
        self.lo, self.hi, self.pix0, self.pix1 = lo, hi, pix0, pix1

    def __call__(self, v):
        v = np.log10(v) if self.log else np.asarray(v, dtype=float)
        return self.pix0 + (v - self.lo) / (self.hi - self.lo) * (self.pix1 - self.pix0)

    def ticks(self) -> list[tuple[float, str]]:
        if self.log:
            a, b = math.ceil(self.lo - 1e-9), math.floor(self.hi + 1e-9)
            stride = max(1, (b - a) // 6 + 1)
            return [(10.0**e, f"1e{e}") for e in range(a, b + 1, stride)]
        return [(t, _label(t)) for t in _nice_ticks(self.lo, self.hi)]


def emit_svg(
    table,
    x_col: str,
    y_cols: Sequence[str],
    path,
    logx: bool = False,
    logy: bool = False,
    group_col: str | None = None,
    title: str = "",
) -> Path:
    """Plot ``y_cols`` against ``x_col`` and write a self-contained SVG.

    With ``group_col`` each distinct value of that column becomes its own
    trace (one ``y`` column only).  On log axes values below ``1e-16``
    (including exact zeros) are clipped to ``1e-16``.
    """
    cols = _table_columns(table)
    y_cols = list(y_cols)
    if not y_cols:
        raise ValueError("at least one y column is required")
    for c in [x_col, *y_cols] + ([group_col] if group_col else []):
        if c not in cols:
            raise ValueError(f"unknown column {c!r}; available: {sorted(cols)}")
    x = cols[x_col]
    if x.size < 2:
        raise ValueError("need at least two rows to draw a line")

    series: list[tuple[str, np.ndarray, np.ndarray]] = []
    if group_col:
        if len(y_cols) != 1:
            raise ValueError("group_col needs exactly one y column")
        g = cols[group_col]
        for key in dict.fromkeys(g.tolist()):
            m = g == key
            series.append((f"{group_col}={_label(key)}", x[m], cols[y_cols[0]][m]))
    else:
        series = [(c, x, cols[c]) for c in y_cols]

    def prep(v, log):
        v = np.asarray(v, dtype=float)
        return np.maximum(v, LOG_FLOOR) if log else v

    series = [(name, prep(a, logx), prep(b, logy)) for name, a, b in series]
    all_x = np.concatenate([s[1] for s in series])
    all_y = np.concatenate([s[2] for s in series])
    if not (np.all(np.isfinite(all_x)) and np.all(np.isfinite(all_y))):
        raise ValueError("plot data must be finite")
    ax = _Axis(all_x, logx, LEFT, WIDTH - RIGHT)
    if np.min(all_y) == np.max(all_y):
        # flat line: pad the range instead of refusing to plot it
        pad = abs(all_y[0]) * 0.1 or 1.0
        ay = _Axis(np.array([all_y[0] / 10 if logy else all_y[0] - pad, all_y[0] * 10 if logy else all_y[0] + pad]), logy, HEIGHT - BOTTOM, TOP)
    else:
        ay = _Axis(all_y, logy, HEIGHT - BOTTOM, TOP)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    x0, x1, y0, y1 = LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP
    out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
    for v, lab in ax.ticks():
        px = _fmt(float(ax(v)))
        out.append(f'<line x1="{px}" y1="{y0}" x2="{px}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{y0 + 18}" text-anchor="middle">{lab}</text>')
    for v, lab in ay.ticks():
        py = _fmt(float(ay(v)))
        out.append(f'<line x1="{x0 - 5}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">{lab}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_col)}</text>')
    out.append(f'<clipPath id="plot"><rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}"/></clipPath>')
    for i, (name, sx, sy) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        order = np.argsort(sx, kind="stable")
        pts = " ".join(f"{_fmt(float(ax(a)))},{_fmt(float(ay(b)))}" for a, b in zip(sx[order], sy[order]))
        out.append(f'<polyline clip-path="url(#plot)" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = y1 + 14 + 16 * i
        out.append(f'<line x1="{x1 + 10}" y1="{ly}" x2="{x1 + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 + 35}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
