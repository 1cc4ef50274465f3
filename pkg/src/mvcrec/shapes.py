"""Seeded synthetic voxel shapes: unions of boxes, spheres, and L/C pieces.

Shapes are rasterized straight onto the grid, so the ground truth is exact at
cell resolution. The C family carves a blind notch into a box, which no
silhouette can reveal (used to probe the visual-hull limit of mask supervision).
"""

from __future__ import annotations

import numpy as np

from .grid import CUBE_ROTATIONS, OccupancyGrid, rotate_axis_aligned

FAMILIES = ("boxes", "spheres", "lshapes", "mixed", "cshape")


def _cell_centers(dims):
    axes = [(-0.5 + (np.arange(d) + 0.5) / d) for d in dims]
    return np.meshgrid(*axes, indexing="ij")


def _box(X, Y, Z, lo, hi):
    return (
        (X >= lo[0]) & (X <= hi[0])
        & (Y >= lo[1]) & (Y <= hi[1])
        & (Z >= lo[2]) & (Z <= hi[2])
    )


def _sphere(X, Y, Z, center, radius):
    return (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2 <= radius**2


def _random_box(rng, X, Y, Z):
    c = rng.uniform(-0.14, 0.14, 3)
    half = rng.uniform(0.16, 0.3, 3)
    return _box(X, Y, Z, np.maximum(c - half, -0.42), np.minimum(c + half, 0.42))


def _random_sphere(rng, X, Y, Z):
    c = rng.uniform(-0.12, 0.12, 3)
    r = rng.uniform(0.17, 0.27)
    return _sphere(X, Y, Z, c, r)


def _random_lshape(rng, X, Y, Z):
    c = rng.uniform(-0.12, 0.12, 3)
    long_half = rng.uniform(0.22, 0.32)
    thick = rng.uniform(0.1, 0.15)
    a1, a2 = rng.choice(3, size=2, replace=False)
    h1 = np.full(3, thick)
    h1[a1] = long_half
    h2 = np.full(3, thick)
    h2[a2] = long_half
    # second arm starts from one end of the first
    off = np.zeros(3)
    off[a1] = long_half - thick
    off[a2] = long_half - thick
    return _box(X, Y, Z, c - h1, c + h1) | _box(X, Y, Z, c + off - h2, c + off + h2)


def c_shape(dims, opening_axis=0):
    """A box with a blind notch: concave, but with box-identical silhouettes.

    The notch is carved along `opening_axis` from one face, stopping inside the
    box, so no ray that misses the solid can tell the notch from solid material.
    """
    X, Y, Z = _cell_centers(dims)
    solid = _box(X, Y, Z, (-0.32, -0.28, -0.28), (0.32, 0.28, 0.28))
    lo = np.array([-0.33, -0.16, -0.16])
    hi = np.array([0.14, 0.16, 0.16])
    if opening_axis != 0:
        lo[[0, opening_axis]] = lo[[opening_axis, 0]]
        hi[[0, opening_axis]] = hi[[opening_axis, 0]]
    notch = _box(X, Y, Z, lo, hi)
    return OccupancyGrid((solid & ~notch).astype(np.float64))


def _is_azimuthally_distinct(values, max_iou=0.8):
    """Reject shapes so symmetric that rotation alignment becomes ambiguous."""
    g = OccupancyGrid(values)
    for m in CUBE_ROTATIONS[1:]:
        rot = rotate_axis_aligned(g, m).values
        inter = np.logical_and(values > 0.5, rot > 0.5).sum()
        union = np.logical_or(values > 0.5, rot > 0.5).sum()
        if union and inter / union > max_iou:
            return False
    return True


def generate_shape(dims, rng, family="mixed", translation_jitter=0.0, require_asymmetric=True):
    """Seeded random solid of the given family as a binary OccupancyGrid.

    translation_jitter > 0 offsets the whole composition around the origin by a
    uniform offset in [-j, j]^3 (the object is then not centered).
    """
    if family == "cshape":
        return c_shape(dims)
    if family not in FAMILIES:
        raise ValueError(f"unknown shape family {family!r}")
    X, Y, Z = _cell_centers(dims)
    for _ in range(64):
        offset = rng.uniform(-translation_jitter, translation_jitter, 3) if translation_jitter else np.zeros(3)
        Xo, Yo, Zo = X - offset[0], Y - offset[1], Z - offset[2]
        n = int(rng.integers(2, 5))
        solid = np.zeros(dims, dtype=bool)
        for _ in range(n):
            if family == "boxes":
                kind = "box"
            elif family == "spheres":
                kind = "sphere"
            elif family == "lshapes":
                kind = "lshape"
            else:
                kind = rng.choice(["box", "sphere", "lshape"])
            if kind == "box":
                solid |= _random_box(rng, Xo, Yo, Zo)
            elif kind == "sphere":
                solid |= _random_sphere(rng, Xo, Yo, Zo)
            else:
                solid |= _random_lshape(rng, Xo, Yo, Zo)
        values = solid.astype(np.float64)
        frac = values.mean()
        if frac < 0.12 or frac > 0.5:
            continue
        if require_asymmetric and not _is_azimuthally_distinct(values):
            continue
        return OccupancyGrid(values)
    raise RuntimeError("shape generator failed to produce an acceptable solid")
