"""Length of a level line of a cell-centred 2D field, clipped to a domain."""
from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import measure


def extend_outside(f: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Copy each outside cell's value from its nearest inside cell."""
    if inside.all():
        return f
    _, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
    return f[tuple(idx)]


def level_line_length(f: np.ndarray, level: float, origin: np.ndarray, h: float, contains,
                      subdivide: int = 8) -> float:
    """Marching-squares length of {f = level} inside ``contains``.

    ``f`` holds values at cell centres origin + (i + 1/2) h.  The field is
    padded by one edge-replicated cell per side so that level lines reach
    the domain boundary; segments are then clipped by subdivision.
    """
    fp = np.pad(f, 1, mode="edge")
    total = 0.0
    u = (np.arange(subdivide) + 0.5) / subdivide
    for cont in measure.find_contours(fp, level):
        p = origin + (cont - 1 + 0.5) * h
        a, b = p[:-1], p[1:]
        if len(a) == 0:
            continue
        mids = a[:, None, :] + u[None, :, None] * (b - a)[:, None, :]
        frac = contains(mids).mean(axis=1)
        total += float((np.linalg.norm(b - a, axis=1) * frac).sum())
    return total
