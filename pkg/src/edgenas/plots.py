"""Dependency-free SVG emission for study artifacts.

Plots are derived views; the CSVs next to them are the primary outputs.
"""

from __future__ import annotations

import math


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    style = (
        "<style>text{font-family:monospace;font-size:11px;fill:#333}"
        ".t{font-size:13px}</style>"
    )
    return "\n".join([head, style, *body, "</svg>"]) + "\n"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def write_scatter_svg(path, xs, ys, xlabel: str, ylabel: str, title: str,
                      diagonal: bool = False) -> None:
    w, h, m = 480, 480, 56
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if diagonal:
        xlo = ylo = min(xlo, ylo)
        xhi = yhi = max(xhi, yhi)
    xspan = (xhi - xlo) or 1.0
    yspan = (yhi - ylo) or 1.0

    def px(x):
        return m + (x - xlo) / xspan * (w - 2 * m)

    def py(y):
        return h - m - (y - ylo) / yspan * (h - 2 * m)

    body = [f'<text class="t" x="{m}" y="20">{title}</text>']
    body.append(f'<rect x="{m}" y="{m}" width="{w-2*m}" height="{h-2*m}" fill="none" stroke="#999"/>')
    for t in _ticks(xlo, xhi):
        body.append(f'<text x="{px(t)-14:.1f}" y="{h-m+16}">{t:.3g}</text>')
    for t in _ticks(ylo, yhi):
        body.append(f'<text x="4" y="{py(t)+4:.1f}">{t:.3g}</text>')
    body.append(f'<text x="{w/2-30}" y="{h-8}">{xlabel}</text>')
    body.append(f'<text x="12" y="{m-10}">{ylabel}</text>')
    if diagonal:
        body.append(
            f'<line x1="{px(xlo):.1f}" y1="{py(xlo):.1f}" x2="{px(xhi):.1f}" y2="{py(xhi):.1f}" '
            f'stroke="#bbb" stroke-dasharray="4 3"/>'
        )
    for x, y in zip(xs, ys):
        body.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" fill="#2b6cb0" fill-opacity="0.6"/>')
    with open(path, "w", encoding="utf-8") as f:
        f.write(_svg(w, h, body))


def write_heatmap_svg(path, rows, cols, values, row_label: str, col_label: str, title: str) -> None:
    """Grid heat map on log2(value): blue below 1.0, red above."""
    cell = 34
    m = 72
    w = m + cell * len(cols) + 20
    h = m + cell * len(rows) + 40
    body = [f'<text class="t" x="{m}" y="20">{title}</text>']
    vmax = max(abs(math.log2(v)) for v in values.values()) or 1.0
    for i, r in enumerate(rows):
        body.append(f'<text x="6" y="{m + i*cell + cell/2 + 4}">{r}</text>')
        for j, c in enumerate(cols):
            v = values[(r, c)]
            t = max(-1.0, min(1.0, math.log2(v) / vmax))
            if t >= 0:
                color = f"rgb({255},{int(235*(1-t))+20},{int(235*(1-t))+20})"
            else:
                color = f"rgb({int(235*(1+t))+20},{int(235*(1+t))+20},{255})"
            x, y = m + j * cell, m + i * cell
            body.append(f'<rect x="{x}" y="{y}" width="{cell-2}" height="{cell-2}" fill="{color}"/>')
            body.append(f'<text x="{x+2}" y="{y+cell/2+3}">{v:.2f}</text>')
    for j, c in enumerate(cols):
        body.append(f'<text x="{m + j*cell}" y="{m-8}">{c}</text>')
    body.append(f'<text x="6" y="{m-28}">{row_label} \\ {col_label}</text>')
    with open(path, "w", encoding="utf-8") as f:
        f.write(_svg(w, h, body))
