"""Standalone SVG heatmaps of matrix entries.

Colour encodes sign (blue negative, red positive) and saturation encodes
``|entry|`` normalized by the largest magnitude in the figure, so zero is
white and the map is symmetric about zero. Output is plain SVG text with no
timestamps, hence byte-identical for identical input.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_POS = (178, 24, 43)
_NEG = (33, 102, 172)


def _colour(v: float) -> str:
    """``v`` in ``[-1, 1]`` to a hex colour interpolated from white."""
    end = _POS if v >= 0 else _NEG
    t = min(abs(v), 1.0)
    r, g, b = (round(255 + t * (c - 255)) for c in end)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(M, cell: int = 8, title: str | None = None, split: int = 0,
                absolute: bool = True) -> str:
    """Render ``M`` as an SVG heatmap.

    ``absolute`` shows ``|M|`` (all cells on the positive side of the map).
    ``split`` draws guide lines after the first ``split`` rows and columns,
    e.g. to separate latent from observed variables.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("heatmap needs a 2-d array")
    A = np.abs(M) if absolute else M
    scale = float(np.max(np.abs(A), initial=0.0))
    N = A / scale if scale > 0 else np.zeros_like(A)
    rows, cols = N.shape
    top = 20 if title else 0
    width, height = cols * cell, rows * cell + top
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="2" y="14" font-family="sans-serif" font-size="12">{escape(title)}</text>')
    for i in range(rows):
        for j in range(cols):
            if N[i, j] == 0.0:
                continue
            out.append(f'<rect x="{j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                       f'fill="{_colour(N[i, j])}"/>')
    if 0 < split < min(rows, cols):
        y, x = top + split * cell, split * cell
        out.append(f'<line x1="0" y1="{y}" x2="{width}" y2="{y}" stroke="#000000" stroke-width="1"/>')
        out.append(f'<line x1="{x}" y1="{top}" x2="{x}" y2="{height}" stroke="#000000" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_heatmap(path, M, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(heatmap_svg(M, **kwargs))
