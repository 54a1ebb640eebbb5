"""SVG beeswarm summary of SHAP values, drawn without a plotting library."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

ROW_HEIGHT = 28
LEFT_MARGIN = 190
PLOT_WIDTH = 520
TOP_MARGIN = 30
BOTTOM_MARGIN = 50
DOT_RADIUS = 2.2


def _color(t: float) -> str:
    """Blue (low feature value) to red (high); grey when unknown."""
    if np.isnan(t):
        return "#9a9a9a"
    t = min(max(t, 0.0), 1.0)
    lo, hi = (0x00, 0x8B, 0xFB), (0xFF, 0x00, 0x52)
    r, g, b = (round(a + (c - a) * t) for a, c in zip(lo, hi))
    return f"#{r:02x}{g:02x}{b:02x}"


def _normalize(col: np.ndarray) -> np.ndarray:
    present = col[~np.isnan(col)]
    if len(present) == 0:
        return np.full(len(col), np.nan)
    lo, hi = np.percentile(present, [5, 95])
    if hi <= lo:
        lo, hi = present.min(), present.max()
    if hi <= lo:
        return np.where(np.isnan(col), np.nan, 0.5)
    return (col - lo) / (hi - lo)


def swarm_offsets(x_pixels: np.ndarray, n_bins: int = 100, max_offset: float = 0.4) -> np.ndarray:
    """Vertical offsets in row units: dots sharing an x bin fan out up and down."""
    n = len(x_pixels)
    if n == 0:
        return np.zeros(0)
    lo, hi = x_pixels.min(), x_pixels.max()
    span = hi - lo if hi > lo else 1.0
    bins = np.minimum(((x_pixels - lo) / span * n_bins).astype(int), n_bins - 1)
    offsets = np.zeros(n)
    counts = np.bincount(bins, minlength=n_bins)
    layer = np.zeros(n_bins, dtype=int)
    scale = max_offset / max(1, counts.max() // 2)
    for i in np.argsort(x_pixels, kind="stable"):
        b = bins[i]
        k = layer[b]
        layer[b] += 1
        step = (k + 1) // 2
        offsets[i] = (step if k % 2 else -step) * scale
    return offsets


def beeswarm_svg(
    shap_values: np.ndarray,
    feature_values: np.ndarray,
    feature_names,
    order,
    max_features: int = 20,
) -> str:
    """One ``<g class="feature-row">`` per feature, most important on top."""
    order = list(order)[:max_features]
    index = {n: j for j, n in enumerate(feature_names)}
    cols = [index[n] for n in order]
    vals = shap_values[:, cols] if cols else np.zeros((shap_values.shape[0], 0))
    extent = float(np.abs(vals).max()) if vals.size else 0.0
    extent = extent if extent > 0 else 1.0
    height = TOP_MARGIN + ROW_HEIGHT * max(len(cols), 1) + BOTTOM_MARGIN
    width = LEFT_MARGIN + PLOT_WIDTH + 40

    def px(v):
        return LEFT_MARGIN + (np.asarray(v) + extent) / (2 * extent) * PLOT_WIDTH

    zero_x = float(px(0.0))
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<line x1="{zero_x:.2f}" y1="{TOP_MARGIN - 10}" x2="{zero_x:.2f}" '
        f'y2="{height - BOTTOM_MARGIN + 5}" stroke="#999" stroke-width="1"/>',
    ]
    for row, (name, j) in enumerate(zip(order, cols)):
        y0 = TOP_MARGIN + ROW_HEIGHT * row + ROW_HEIGHT / 2
        xs = px(shap_values[:, j])
        ys = y0 + swarm_offsets(xs) * ROW_HEIGHT
        colors = _normalize(feature_values[:, j].astype(np.float64))
        parts.append(f'<g class="feature-row" data-feature="{escape(name)}">')
        parts.append(
            f'<text x="{LEFT_MARGIN - 8}" y="{y0 + 4:.2f}" text-anchor="end">{escape(name)}</text>'
        )
        for x, y, c in zip(xs, ys, colors):
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{DOT_RADIUS}" fill="{_color(c)}"/>')
        parts.append("</g>")
    axis_y = height - BOTTOM_MARGIN + 20
    parts.append(
        f'<text x="{LEFT_MARGIN + PLOT_WIDTH / 2:.2f}" y="{axis_y + 14}" text-anchor="middle">'
        "SHAP value (impact on log-odds of death)</text>"
    )
    for tick in (-extent, 0.0, extent):
        parts.append(
            f'<text x="{float(px(tick)):.2f}" y="{axis_y}" text-anchor="middle">{tick:.2f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
