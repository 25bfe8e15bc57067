"""Minimal self-contained SVG scatter/line charts on log or linear axes."""

from __future__ import annotations

import math
from html import escape
from typing import Sequence

WIDTH, HEIGHT, PAD = 480, 360, 56
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _bounds(values: Sequence[float], log: bool) -> tuple[float, float]:
    vals = [math.log10(v) if log else v for v in values if (v > 0 or not log) and math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    margin = 0.05 * (hi - lo)
    return lo - margin, hi + margin


def svg_chart(
    series: Sequence[dict],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = True,
    logy: bool = True,
) -> str:
    """Render series dicts {"label", "x", "y", "style": "points"|"line"} to an SVG string."""
    xs = [x for s in series for x in s["x"]]
    ys = [y for s in series for y in s["y"]]
    x0, x1 = _bounds(xs, logx)
    y0, y1 = _bounds(ys, logy)

    def px(x):
        v = math.log10(x) if logx else x
        return PAD + (v - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y):
        v = math.log10(y) if logy else y
        return HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    def ok(x, y):
        return math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx) and (y > 0 or not logy)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{PAD / 2}" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for lo, hi, axis in ((x0, x1, "x"), (y0, y1, "y")):
        log = logx if axis == "x" else logy
        for k in range(5):
            v = lo + (hi - lo) * k / 4
            label = f"1e{v:.1f}" if log else f"{v:.3g}"
            if axis == "x":
                pos = PAD + k / 4 * (WIDTH - 2 * PAD)
                out.append(f'<text x="{pos:.1f}" y="{HEIGHT - PAD + 14}" text-anchor="middle">{label}</text>')
            else:
                pos = HEIGHT - PAD - k / 4 * (HEIGHT - 2 * PAD)
                out.append(f'<text x="{PAD - 4}" y="{pos + 4:.1f}" text-anchor="end">{label}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(s["x"], s["y"]) if ok(x, y)]
        if s.get("style", "points") == "line" and len(pts) > 1:
            d = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            out.extend(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>' for x, y in pts)
        if s.get("label"):
            out.append(f'<text x="{WIDTH - PAD + 4}" y="{PAD + 12 * (i + 1)}" fill="{color}" font-size="9">'
                       f'{escape(str(s["label"]))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
