"""Minimal self-contained SVG rendering: grouped bars with error whiskers
and violin plots via a Gaussian KDE polyline. No plotting dependencies."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#4878cf", "#ee854a", "#6acc65", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0"]

_FONT = 'font-family="Helvetica,Arial,sans-serif" font-size="11"'


def _svg_document(width: int, height: int, body: list) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _nice_max(value: float) -> float:
    if value <= 0:
        return 1.0
    magnitude = 10 ** math.floor(math.log10(value))
    for mult in (1, 2, 5, 10):
        if value <= mult * magnitude:
            return mult * magnitude
    return 10 * magnitude


def _axis(body, x0, y0, y1, vmax, label):
    body.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y0 - frac * (y0 - y1)
        body.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="#333"/>')
        body.append(
            f'<text x="{x0 - 7}" y="{y + 4:.1f}" text-anchor="end" {_FONT}>'
            f"{frac * vmax:g}</text>"
        )
    body.append(
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" {_FONT} '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})" text-anchor="middle">'
        f"{escape(label)}</text>"
    )


def grouped_bar_chart(groups, series_names, title="", y_label="SHD") -> str:
    """groups: list of (group_label, {series: (value, err)}).

    Series are colored consistently and listed in a legend.
    """
    margin_left, margin_bottom, margin_top = 56, 46, 34
    bar_w = 16
    gap = 18
    group_w = bar_w * len(series_names) + gap
    width = max(320, margin_left + group_w * len(groups) + 160)
    height = 300
    y0, y1 = height - margin_bottom, margin_top
    vmax = _nice_max(
        max(
            (entry[0] + entry[1] for _, bars in groups for entry in bars.values()),
            default=1.0,
        )
    )
    body = []
    if title:
        body.append(f'<text x="{width / 2}" y="18" text-anchor="middle" {_FONT}>'
                    f"{escape(title)}</text>")
    _axis(body, margin_left, y0, y1, vmax, y_label)

    def y_of(v):
        return y0 - (min(v, vmax) / vmax) * (y0 - y1)

    for gi, (label, bars) in enumerate(groups):
        gx = margin_left + 6 + gi * group_w
        for si, series in enumerate(series_names):
            if series not in bars:
                continue
            value, err = bars[series]
            x = gx + si * bar_w
            y = y_of(value)
            color = PALETTE[si % len(PALETTE)]
            body.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 2}" '
                f'height="{max(0.0, y0 - y):.1f}" fill="{color}"/>'
            )
            if err > 0:
                cx = x + (bar_w - 2) / 2
                body.append(
                    f'<line x1="{cx:.1f}" y1="{y_of(value - err):.1f}" '
                    f'x2="{cx:.1f}" y2="{y_of(value + err):.1f}" stroke="#222"/>'
                )
        body.append(
            f'<text x="{gx + group_w / 2 - gap / 2:.1f}" y="{y0 + 16}" '
            f'text-anchor="middle" {_FONT}>{escape(str(label))}</text>'
        )
    legend_x = width - 150
    for si, series in enumerate(series_names):
        ly = margin_top + si * 16
        body.append(
            f'<rect x="{legend_x}" y="{ly}" width="10" height="10" '
            f'fill="{PALETTE[si % len(PALETTE)]}"/>'
        )
        body.append(f'<text x="{legend_x + 15}" y="{ly + 9}" {_FONT}>{escape(series)}</text>')
    return _svg_document(width, height, body)


def _gaussian_kde(values, grid):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / max(1, n - 1)
    bw = 1.06 * math.sqrt(var) * n ** (-0.2) if var > 0 else 1.0
    bw = max(bw, 1e-9)
    out = []
    for g in grid:
        total = sum(math.exp(-0.5 * ((g - v) / bw) ** 2) for v in values)
        out.append(total / (n * bw * math.sqrt(2 * math.pi)))
    return out


def violin_chart(groups, title="", y_label="SHD") -> str:
    """groups: list of (label, values). One mirrored KDE polygon per group."""
    margin_left, margin_bottom, margin_top = 56, 46, 34
    slot_w = 64
    width = max(320, margin_left + slot_w * len(groups) + 40)
    height = 320
    y0, y1 = height - margin_bottom, margin_top
    all_values = [v for _, values in groups for v in values]
    vmax = _nice_max(max(all_values, default=1.0) * 1.05)
    body = []
    if title:
        body.append(f'<text x="{width / 2}" y="18" text-anchor="middle" {_FONT}>'
                    f"{escape(title)}</text>")
    _axis(body, margin_left, y0, y1, vmax, y_label)

    def y_of(v):
        return y0 - (min(v, vmax) / vmax) * (y0 - y1)

    steps = 40
    grid = [vmax * i / steps for i in range(steps + 1)]
    for gi, (label, values) in enumerate(groups):
        cx = margin_left + slot_w * (gi + 0.5)
        color = PALETTE[gi % len(PALETTE)]
        if len(values) >= 2:
            dens = _gaussian_kde(values, grid)
            peak = max(dens) or 1.0
            half = (slot_w * 0.42)
            right = [
                f"{cx + half * d / peak:.1f},{y_of(g):.1f}" for g, d in zip(grid, dens)
            ]
            left = [
                f"{cx - half * d / peak:.1f},{y_of(g):.1f}"
                for g, d in reversed(list(zip(grid, dens)))
            ]
            body.append(
                f'<polygon points="{" ".join(right + left)}" fill="{color}" '
                f'fill-opacity="0.55" stroke="{color}"/>'
            )
        for v in values:
            body.append(
                f'<circle cx="{cx:.1f}" cy="{y_of(v):.1f}" r="1.6" fill="#333" '
                f'fill-opacity="0.5"/>'
            )
        body.append(
            f'<text x="{cx:.1f}" y="{y0 + 16}" text-anchor="middle" {_FONT}>'
            f"{escape(str(label))}</text>"
        )
    return _svg_document(width, height, body)


def table_chart(rows, title="") -> str:
    """Plain text-grid SVG for recommendation matrices."""
    row_h = 18
    col_w = 150
    n_cols = max(len(r) for r in rows) if rows else 1
    width = 40 + col_w * n_cols
    height = 50 + row_h * len(rows)
    body = []
    if title:
        body.append(f'<text x="20" y="22" {_FONT} font-weight="bold">{escape(title)}</text>')
    for ri, row in enumerate(rows):
        for ci, cell in enumerate(row):
            body.append(
                f'<text x="{20 + ci * col_w}" y="{44 + ri * row_h}" {_FONT}>'
                f"{escape(str(cell))}</text>"
            )
    return _svg_document(width, height, body)
