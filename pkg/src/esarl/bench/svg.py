"""Minimal deterministic SVG line plots.

Coordinates are printed with fixed precision so identical data always yields
identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    lower: Optional[Sequence[float]] = None  # optional shaded band
    upper: Optional[Sequence[float]] = None


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    log_y: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-3):
        return f"{v:.0e}"
    return f"{v:.6g}"


def _finite_pairs(x, y, log_y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if log_y:
        ok &= y > 0
    return x[ok], y[ok]


def _panel(p: Panel, x0: float, y0: float, w: float, h: float, out: list) -> None:
    left, right, top, bottom = 70.0, 150.0, 30.0, 45.0
    pw, ph = w - left - right, h - top - bottom
    tr = (lambda v: np.log10(v)) if p.log_y else (lambda v: v)
    xs, ys = [], []
    for s in p.series:
        for yy in (s.y, s.lower, s.upper):
            if yy is None:
                continue
            a, b = _finite_pairs(s.x, yy, p.log_y)
            xs.append(a)
            ys.append(tr(b))
    xs = np.concatenate(xs) if xs else np.zeros(1)
    ys = np.concatenate(ys) if ys else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    xlo, xhi = float(xs.min()), float(xs.max())
    ylo, yhi = float(ys.min()), float(ys.max())
    if xhi == xlo:
        xlo, xhi = xlo - 1, xhi + 1
    if yhi == ylo:
        ylo, yhi = ylo - 1, yhi + 1
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(v):
        return x0 + left + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return y0 + top + (1 - (v - ylo) / (yhi - ylo)) * ph

    out.append(f'<text x="{_fmt(x0 + left + pw / 2)}" y="{_fmt(y0 + 18)}" text-anchor="middle" '
               f'font-size="14">{escape(p.title)}</text>')
    out.append(f'<rect x="{_fmt(x0 + left)}" y="{_fmt(y0 + top)}" width="{_fmt(pw)}" height="{_fmt(ph)}" '
               f'fill="none" stroke="#333"/>')
    for t in _ticks(xlo, xhi):
        out.append(f'<text x="{_fmt(px(t))}" y="{_fmt(y0 + top + ph + 15)}" text-anchor="middle" '
                   f'font-size="10">{_label(t)}</text>')
    if p.log_y:
        yt = [float(k) for k in range(math.ceil(ylo), math.floor(yhi) + 1)] or [ylo]
        labels = [_label(10**t) for t in yt]
    else:
        yt = _ticks(ylo, yhi)
        labels = [_label(t) for t in yt]
    for t, lab in zip(yt, labels):
        out.append(f'<line x1="{_fmt(x0 + left)}" x2="{_fmt(x0 + left + pw)}" y1="{_fmt(py(t))}" '
                   f'y2="{_fmt(py(t))}" stroke="#ddd"/>')
        out.append(f'<text x="{_fmt(x0 + left - 5)}" y="{_fmt(py(t) + 3)}" text-anchor="end" '
                   f'font-size="10">{lab}</text>')
    out.append(f'<text x="{_fmt(x0 + left + pw / 2)}" y="{_fmt(y0 + h - 8)}" text-anchor="middle" '
               f'font-size="12">{escape(p.xlabel)}</text>')
    cx, cy = x0 + 16, y0 + top + ph / 2
    out.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(p.ylabel)}</text>')

    for k, s in enumerate(p.series):
        color = PALETTE[k % len(PALETTE)]
        if s.lower is not None and s.upper is not None:
            xa, lo = _finite_pairs(s.x, s.lower, p.log_y)
            xb, hi = _finite_pairs(s.x, s.upper, p.log_y)
            if len(xa) and len(xb):
                pts = [(px(a), py(tr(b))) for a, b in zip(xa, lo)] + \
                      [(px(a), py(tr(b))) for a, b in zip(xb[::-1], hi[::-1])]
                out.append(f'<polygon class="band" points="{" ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)}" '
                           f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        xa, ya = _finite_pairs(s.x, s.y, p.log_y)
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(tr(b)))}" for a, b in zip(xa, ya))
        out.append(f'<polyline class="series" data-label="{escape(s.label)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = y0 + top + 12 + 16 * k
        lx = x0 + left + pw + 10
        out.append(f'<line x1="{_fmt(lx)}" x2="{_fmt(lx + 18)}" y1="{_fmt(ly - 4)}" y2="{_fmt(ly - 4)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(lx + 22)}" y="{_fmt(ly)}" font-size="11">{escape(s.label)}</text>')


def render(panels: list, width: int = 640, height: int = 400) -> str:
    """Stack ``panels`` side by side in one SVG document."""
    total = width * len(panels)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{height}" '
           f'viewBox="0 0 {total} {height}" font-family="sans-serif">',
           f'<rect width="{total}" height="{height}" fill="white"/>']
    for i, p in enumerate(panels):
        _panel(p, float(i * width), 0.0, float(width), float(height), out)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def count_series(svg_text: str) -> int:
    return svg_text.count('class="series"')
