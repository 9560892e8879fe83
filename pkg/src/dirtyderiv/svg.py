"""Minimal SVG line charts (no plotting dependency)."""

from __future__ import annotations

from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _decimate(x, y, max_points):
    if x.size <= max_points:
        return x, y
    idx = np.linspace(0, x.size - 1, max_points).round().astype(int)
    return x[idx], y[idx]


def line_chart(series, title="", xlabel="", ylabel="", width=720, height=360,
               log_y=False, max_points=2000) -> str:
    """Render ``[(x, y, label), ...]`` as an SVG document string."""
    ml, mr, mt, mb = 70, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    prepared = []
    for x, y, label in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if log_y:
            y = np.log10(np.maximum(np.abs(y), 1e-300))
        keep = np.isfinite(x) & np.isfinite(y)
        prepared.append((*_decimate(x[keep], y[keep], max_points), label))
    xs = np.concatenate([p[0] for p in prepared]) if prepared else np.zeros(1)
    ys = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for frac in np.linspace(0, 1, 5):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        ylab = f"1e{yv:.1f}" if log_y else f"{yv:.3g}"
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{ylab}</text>')
        out.append(f'<line x1="{ml}" x2="{ml + pw}" y1="{sy(yv):.1f}" y2="{sy(yv):.1f}" '
                   f'stroke="#ddd"/>')
    for i, (x, y, label) in enumerate(prepared):
        if x.size == 0:
            continue
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{ml + pw - 5}" y="{mt + 14 + 14 * i}" text-anchor="end" '
                   f'fill="{color}">{escape(str(label))}</text>')
    out.append(f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">'
               f'{escape(title)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)
