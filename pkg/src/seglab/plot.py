"""Minimal SVG line chart with a log-scaled y axis."""

from __future__ import annotations

import math
from html import escape

from seglab import __version__

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 20, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(series: dict, title: str = "") -> str:
    """``series`` maps a label to ``[(pass, ratio), ...]``; nonpositive ratios are dropped."""
    clean = {k: [(p, r) for p, r in pts if r > 0 and math.isfinite(r)] for k, pts in series.items()}
    clean = {k: v for k, v in clean.items() if v}
    if not clean:
        raise ValueError("nothing to plot")
    xs = [p for pts in clean.values() for p, _ in pts]
    ys = [math.log10(r) for pts in clean.values() for _, r in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(logy):
        return TOP + (y1 - logy) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- seglab {__version__} -->",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    step = max(1, (y1 - y0) // 8)
    for e in range(y0, y1 + 1, step):
        y = _fmt(sy(e))
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y}" font-size="11" text-anchor="end" '
                   f'dominant-baseline="middle">1e{e}</text>')
    for j in range(5):
        xv = x0 + (x1 - x0) * j / 4
        x = _fmt(sx(xv))
        out.append(f'<text x="{x}" y="{TOP + ph + 16}" font-size="11" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" font-size="12" text-anchor="middle">passes</text>')
    out.append(f'<text x="14" y="{TOP + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {TOP + ph / 2})">grad-norm ratio</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2}" y="{TOP - 6}" font-size="13" text-anchor="middle">'
                   f"{escape(title)}</text>")
    for idx, (label, pts) in enumerate(clean.items()):
        color = COLORS[idx % len(COLORS)]
        coords = " ".join(f"{_fmt(sx(p))},{_fmt(sy(math.log10(r)))}" for p, r in pts)
        out.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 14 + 18 * idx
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly}" x2="{LEFT + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 35}" y="{ly}" font-size="11" dominant-baseline="middle">'
                   f"{escape(label)}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
