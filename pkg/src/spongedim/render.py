"""SVG pictures of n-approximations projected onto a coordinate plane."""

from __future__ import annotations

import numpy as np

from .model import SpongeSpec
from .symbolic import approximation_arrays

PLANES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}


def projected_rectangles(spec: SpongeSpec, n: int, plane: str = "xy", cap: int = 1_000_000) -> np.ndarray:
    """Distinct ``(x, y, w, h)`` rectangles of the order-``n`` boxes on ``plane``.

    Boxes that project onto the same rectangle are merged. Rows are sorted.
    """
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}")
    i, j = PLANES[plane]
    if j >= spec.d:
        raise ValueError(f"plane {plane} needs d >= {j + 1}")
    corners, edges = approximation_arrays(spec, n, cap)
    rects = np.column_stack([corners[:, i], corners[:, j], edges[:, i], edges[:, j]])
    # merge duplicates that differ only by rounding in the offset sums
    keys = np.round(rects, 12)
    _, first = np.unique(keys, axis=0, return_index=True)
    return rects[first]


def svg(spec: SpongeSpec, n: int, plane: str = "xy", cap: int = 1_000_000, size: int = 512) -> str:
    """SVG 1.1 document on the unit-square viewBox, y axis pointing up."""
    rects = projected_rectangles(spec, n, plane, cap)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 1 1">',
        '<rect x="0" y="0" width="1" height="1" fill="white"/>',
        '<g transform="matrix(1 0 0 -1 0 1)" fill="black" stroke="none">',
    ]
    for x, y, w, h in rects:
        lines.append(f'<rect x="{x:.12g}" y="{y:.12g}" width="{w:.12g}" height="{h:.12g}"/>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"
