"""Minimal deterministic SVG charts (line and scatter)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(lo, hi, a, b):
    if hi <= lo:
        hi = lo + 1.0
    return lambda v: a + (np.asarray(v, float) - lo) * (b - a) / (hi - lo)


def _frame(title, xlabel, ylabel, xlim, ylim):
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">'
        f'{escape(ylabel)}</text>',
    ]
    for frac in np.linspace(0, 1, 5):
        xv = xlim[0] + frac * (xlim[1] - xlim[0])
        yv = ylim[0] + frac * (ylim[1] - ylim[0])
        px = x0 + frac * (x1 - x0)
        py = y0 + frac * (y1 - y0)
        out.append(f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    sx = _scale(xlim[0], xlim[1], x0, x1)
    sy = _scale(ylim[0], ylim[1], y0, y1)
    return out, sx, sy


def _limits(arrays):
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    return lo - pad, hi + pad


def line_chart(path, series, title="", xlabel="t", ylabel="", logy=False) -> None:
    """``series`` is a list of ``(label, xs, ys)``; ``logy`` plots ``log10(y)``."""
    prepared = []
    for label, xs, ys in series:
        ys = np.asarray(ys, float)
        if logy:
            ys = np.log10(np.maximum(ys, 1e-300))
        prepared.append((label, np.asarray(xs, float), ys))
    xlim = _limits([p[1] for p in prepared])
    ylim = _limits([p[2] for p in prepared])
    out, sx, sy = _frame(title, xlabel, ("log10 " if logy else "") + ylabel, xlim, ylim)
    for i, (label, xs, ys) in enumerate(prepared):
        color = COLORS[i % len(COLORS)]
        ok = np.isfinite(ys)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(xs[ok]), sy(ys[ok])))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 4}" y="{MARGIN["top"] + 14 * (i + 1)}" '
                   f'text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def scatter(path, xs, ys, title="", xlabel="", ylabel="", diagonal=True) -> None:
    """Scatter of ``(xs, ys)`` with an optional ``y = x`` reference line."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    lim = _limits([xs, ys])
    out, sx, sy = _frame(title, xlabel, ylabel, lim, lim)
    if diagonal:
        a, b = sx([lim[0], lim[1]]), sy([lim[0], lim[1]])
        out.append(f'<line x1="{a[0]:.2f}" y1="{b[0]:.2f}" x2="{a[1]:.2f}" y2="{b[1]:.2f}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    for a, b in zip(sx(xs), sy(ys)):
        out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{COLORS[0]}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
