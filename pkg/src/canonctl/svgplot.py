"""Minimal static SVG line plots for emitted traces.

Deliberately tiny and dependency-free: the pipeline only needs a quick
visual check of states, inputs and errors next to the CSV ground truth.
Output is deterministic for identical data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ["#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00",
           "#56b4e9", "#000000", "#f0e442"]

WIDTH, HEIGHT = 720, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 150, 36, 44


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min(s for s in (mag, 2 * mag, 2.5 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step / 2, step)


def line_plot(path, series, title: str = "", xlabel: str = "k",
              ylabel: str = "") -> None:
    """Write an SVG chart of `series` = [(label, y) or (label, x, y), ...]."""
    parsed = []
    for item in series:
        if len(item) == 2:
            label, y = item
            y = np.asarray(y, dtype=float).reshape(-1)
            x = np.arange(y.size, dtype=float)
        else:
            label, x, y = item
            x = np.asarray(x, dtype=float).reshape(-1)
            y = np.asarray(y, dtype=float).reshape(-1)
        parsed.append((label, x, y))
    xs = np.concatenate([x for _, x, _ in parsed])
    ys = np.concatenate([y for _, _, y in parsed])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return MARGIN_T + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
           f'height="{plot_h}" fill="none" stroke="#444"/>']
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        out.append(f'<line x1="{px:.1f}" y1="{MARGIN_T + plot_h}" x2="{px:.1f}" '
                   f'y2="{MARGIN_T + plot_h + 4}" stroke="#444"/>')
        out.append(f'<text x="{px:.1f}" y="{MARGIN_T + plot_h + 18}" '
                   f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{py:.1f}" x2="{MARGIN_L}" '
                   f'y2="{py:.1f}" stroke="#444"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{py + 4:.1f}" '
                   f'text-anchor="end">{t:.4g}</text>')
        out.append(f'<line x1="{MARGIN_L}" y1="{py:.1f}" x2="{MARGIN_L + plot_w}" '
                   f'y2="{py:.1f}" stroke="#ddd" stroke-width="0.5"/>')
    for i, (label, x, y) in enumerate(parsed):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}"
                       for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = MARGIN_T + 14 + 16 * i
        lx = MARGIN_L + plot_w + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{label}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" '
                   f'font-size="14">{title}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{HEIGHT - 8}" '
                   f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.0f})">{ylabel}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
