"""Minimal standalone SVG line plots of result tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .results import ResultTable

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class PlotSpec:
    x: str
    y: list[str]
    logx: bool = False
    logy: bool = False
    title: str = ""
    width: int = 640
    height: int = 420

    @classmethod
    def from_mapping(cls, data: dict) -> "PlotSpec":
        if "x" not in data or "y" not in data:
            raise ValueError("plot spec needs 'x' and 'y' column names")
        y = data["y"]
        y = [y] if isinstance(y, str) else list(y)
        known = {"x", "y", "logx", "logy", "title", "width", "height"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plot spec keys: {sorted(unknown)}")
        return cls(
            str(data["x"]), y, bool(data.get("logx", False)), bool(data.get("logy", False)),
            str(data.get("title", "")), int(data.get("width", 640)), int(data.get("height", 420)),
        )


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    return [float(k) for k in range(math.floor(lo), math.ceil(hi) + 1) if lo - 1e-9 <= k <= hi + 1e-9]


def _fmt_tick(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.4g}"


def render_svg(table: ResultTable, spec: PlotSpec) -> str:
    """One polyline per y column over the x column, axes labelled with the headers."""
    if len(table) == 0:
        raise ValueError("cannot render an empty table")
    for name in [spec.x, *spec.y]:
        if name not in table.columns:
            raise ValueError(f"plot column {name!r} not found; have {table.names}")
    x = np.asarray(table[spec.x], float)
    ys = [np.asarray(table[name], float) for name in spec.y]

    def tx(v, log):
        v = np.asarray(v, float)
        if log:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)
        return v

    xs = tx(x, spec.logx)
    yss = [tx(y, spec.logy) for y in ys]
    finite_x = xs[np.isfinite(xs)]
    finite_y = np.concatenate([y[np.isfinite(y)] for y in yss])
    if finite_x.size == 0 or finite_y.size == 0:
        raise ValueError("no finite points to plot")
    x0, x1 = float(finite_x.min()), float(finite_x.max())
    y0, y1 = float(finite_y.min()), float(finite_y.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    w, h = spec.width, spec.height
    left, right, top, bottom = 80, 20, 30 if spec.title else 15, 55
    pw, ph = w - left - right, h - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if spec.title:
        out.append(f'<text x="{w / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(spec.title)}</text>')
    xticks = _log_ticks(x0, x1) if spec.logx else _nice_ticks(x0, x1)
    yticks = _log_ticks(y0, y1) if spec.logy else _nice_ticks(y0, y1)
    for t in xticks:
        if x0 <= t <= x1:
            X = px(t)
            out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{_fmt_tick(t, spec.logx)}</text>')
    for t in yticks:
        if y0 <= t <= y1:
            Y = py(t)
            out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end" font-size="11">{_fmt_tick(t, spec.logy)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{h - 12}" text-anchor="middle" font-size="13">{escape(spec.x)}</text>')
    ylabel = ", ".join(spec.y)
    out.append(
        f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for k, y in enumerate(yss):
        ok = np.isfinite(xs) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[ok], y[ok]))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
