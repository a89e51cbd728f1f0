"""Static SVG line plots with no plotting dependency.

Only what the figures need: several polylines on shared axes, optional
log-scaled y, tick labels and a legend. Output is deterministic text.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#c0392b", "#2471a3", "#229954", "#7d3c98", "#d68910", "#566573")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    dashed: bool = False


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def line_plot(series: list[Series], title: str, xlabel: str, ylabel: str, logy: bool = False,
              floor: float = 1e-16) -> str:
    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = [np.asarray(s.y, float) for s in series]
    if logy:
        ys = [np.log10(np.maximum(np.abs(y), floor)) for y in ys]
    yall = np.concatenate(ys)
    yall = yall[np.isfinite(yall)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(yall.min()), float(yall.max())) if yall.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{TOP + ph}" x2="{px(t):.1f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        label = f"1e{t:.0f}" if logy and float(t).is_integer() else _fmt(10**t if logy else t)
        out.append(f'<line x1="{LEFT - 5}" y1="{py(t):.1f}" x2="{LEFT}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (s, y) in enumerate(zip(series, ys)):
        x = np.asarray(s.x, float)
        keep = np.isfinite(y)
        # thin very long series; shape is preserved at plot resolution
        stride = max(1, int(keep.sum() // 2000))
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep][::stride], y[keep][::stride]))
        color = PALETTE[i % len(PALETTE)]
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{LEFT + pw - 120}" y1="{ly - 4}" x2="{LEFT + pw - 95}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{LEFT + pw - 90}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def projection(points: np.ndarray, azimuth: float = np.deg2rad(35), elevation: float = np.deg2rad(25)):
    """Orthographic view of 3-D points, returning screen-plane (u, v)."""
    ca, sa, ce, se = np.cos(azimuth), np.sin(azimuth), np.cos(elevation), np.sin(elevation)
    x, y, z = np.asarray(points, float).T
    u = ca * x - sa * y
    v = se * (sa * x + ca * y) + ce * z
    return u, v
