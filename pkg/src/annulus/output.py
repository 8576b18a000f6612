"""Deterministic JSON/CSV/SVG writers for reports and point clouds.

Every writer produces byte-identical output for identical inputs: floats are
serialized with Python's shortest round-trip repr (exact for binary64), JSON
keys are sorted, and the SVG contains no ids, timestamps, or library version
strings.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def dumps_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a documenting header row; numbers via round-trip repr."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_scatter_svg(path, points: np.ndarray, *, xlim, ylim,
                      size=(900, 520), radius=0.7, title: str = "") -> None:
    """Minimal scatter plot; presentation-only and never parsed back."""
    w, h = size
    x0, x1 = xlim
    y0, y1 = ylim
    margin = 40.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (w - 2 * margin)

    def sy(y):
        return h - margin - (y - y0) / (y1 - y0) * (h - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{w - 2 * margin}" '
        f'height="{h - 2 * margin}" fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{w / 2}" y="{margin / 2 + 6}" text-anchor="middle" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )
    pts = np.asarray(points)
    for x, y in pts:
        if x0 <= x <= x1 and y0 <= y <= y1:
            parts.append(
                f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{radius}" fill="black"/>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
