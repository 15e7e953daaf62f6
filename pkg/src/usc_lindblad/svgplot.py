"""Minimal standalone SVG line plots, no plotting dependency.

Good enough for quick inspection of trajectories and spectral-density fits;
axes are linear or log10, each series becomes one polyline.
"""

from __future__ import annotations

import numpy as np

__all__ = ["line_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, log):
    if log:
        lo_e, hi_e = int(np.floor(lo)), int(np.ceil(hi))
        step = max(1, (hi_e - lo_e) // 6)
        return [(v, f"1e{v}") for v in range(lo_e, hi_e + 1, step)]
    span = hi - lo
    if span <= 0:
        return [(lo, f"{lo:g}")]
    raw = span / 5
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m for m in (1, 2, 5, 10)), key=lambda m: abs(m * mag - raw)) * mag
    first = np.ceil(lo / step) * step
    return [(v, f"{v:g}") for v in np.arange(first, hi + 0.5 * step, step)]


def line_plot(path, series, title="", xlabel="", ylabel="", logy=False,
              width=720, height=480):
    """Write an SVG with the given series: list of (x, y, label)."""
    ml, mr, mt, mb = 64, 16, 30, 44
    pw, ph = width - ml - mr, height - mt - mb

    xs, ys = [], []
    for x, y, _ in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            good = y > 0
            y = np.where(good, y, np.nan)
            y = np.log10(y)
        xs.append(x)
        ys.append(y)
    x_lo = min(float(np.nanmin(x)) for x in xs)
    x_hi = max(float(np.nanmax(x)) for x in xs)
    y_lo = min(float(np.nanmin(y)) for y in ys)
    y_hi = max(float(np.nanmax(y)) for y in ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + (y_hi - y) / (y_hi - y_lo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                 f'fill="none" stroke="#333"/>')
    for v, lab in _ticks(x_lo, x_hi, False):
        if x_lo <= v <= x_hi:
            parts.append(f'<line x1="{px(v):.1f}" y1="{mt + ph}" x2="{px(v):.1f}" '
                         f'y2="{mt + ph + 4}" stroke="#333"/>')
            parts.append(f'<text x="{px(v):.1f}" y="{mt + ph + 18}" '
                         f'text-anchor="middle">{lab}</text>')
    for v, lab in _ticks(y_lo, y_hi, logy):
        if y_lo <= v <= y_hi:
            parts.append(f'<line x1="{ml - 4}" y1="{py(v):.1f}" x2="{ml}" '
                         f'y2="{py(v):.1f}" stroke="#333"/>')
            parts.append(f'<text x="{ml - 8}" y="{py(v):.1f}" text-anchor="end" '
                         f'dominant-baseline="middle">{lab}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + pw / 2:.0f}" y="{height - 8}" '
                     f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{mt + ph / 2:.0f}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {mt + ph / 2:.0f})">{ylabel}</text>')
    for i, ((x, y, label), xv, yv) in enumerate(zip(series, xs, ys)):
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}"
                       for a, b in zip(xv, yv) if np.isfinite(b))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        if label:
            yl = mt + 16 + 16 * i
            parts.append(f'<line x1="{ml + pw - 130}" y1="{yl - 4}" '
                         f'x2="{ml + pw - 105}" y2="{yl - 4}" stroke="{color}" '
                         f'stroke-width="1.5"/>')
            parts.append(f'<text x="{ml + pw - 100}" y="{yl}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
