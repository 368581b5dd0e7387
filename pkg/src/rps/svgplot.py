"""Minimal SVG line plots with optional logarithmic axes."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
MARKERS = ("circle", "square", "diamond")

W, H = 560, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50


def _fmt(v):
    return f"{v:.3g}"


def _ticks(lo, hi, log):
    if log:
        return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1)]
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / 2))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 8:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_plot(series, path, title="", xlabel="", ylabel="", logx=False, logy=True):
    """Write ``series`` ({label: (xs, ys)}) as an SVG file.

    Non-positive values are dropped on log axes.
    """
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    cleaned = {}
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if math.isfinite(y) and (not logy or y > 0) and (not logx or x > 0)]
        if pts:
            cleaned[label] = [(tx(x), ty(y)) for x, y in pts]
    allx = [p[0] for pts in cleaned.values() for p in pts] or [0.0, 1.0]
    ally = [p[1] for pts in cleaned.values() for p in pts] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def X(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return TOP + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(y0, y1, logy):
        v = math.log10(t) if logy else t
        if y0 <= v <= y1:
            out.append(f'<line x1="{LEFT}" x2="{LEFT + pw}" y1="{Y(v):.2f}" y2="{Y(v):.2f}" '
                       f'stroke="#ddd"/>')
            out.append(f'<text x="{LEFT - 6}" y="{Y(v) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    for t in _ticks(x0, x1, logx):
        v = math.log10(t) if logx else t
        if x0 <= v <= x1:
            out.append(f'<line x1="{X(v):.2f}" x2="{X(v):.2f}" y1="{TOP + ph}" y2="{TOP + ph + 4}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{X(v):.2f}" y="{TOP + ph + 16}" text-anchor="middle">'
                       f'{_fmt(t)}</text>')
    for k, (label, pts) in enumerate(cleaned.items()):
        colour = PALETTE[k % len(PALETTE)]
        d = " ".join(f"{'M' if j == 0 else 'L'}{X(x):.2f},{Y(y):.2f}" for j, (x, y) in enumerate(pts))
        out.append(f'<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.8"/>')
        for x, y in pts:
            out.append(f'<circle cx="{X(x):.2f}" cy="{Y(y):.2f}" r="3" fill="{colour}"/>')
        ly = TOP + 14 + 18 * k
        out.append(f'<line x1="{LEFT + pw + 12}" x2="{LEFT + pw + 32}" y1="{ly}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2}" y="18" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    out.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")
