"""Voxel occupancy grids over the unit cube with differentiable trilinear sampling.

A grid covers the fixed world cube [-0.5, 0.5]^3. Cell (ix, iy, iz) of a
(Dx, Dy, Dz) grid has its center at (-0.5 + (ix+0.5)/Dx, ...). Points outside
the grid sample as empty (occupancy 0).
"""

from __future__ import annotations

import itertools
import struct

import numpy as np

MVOX_MAGIC = b"MVOX"
MVOX_VERSION = 1


class OccupancyGrid:
    """Immutable 3D array of per-cell occupancy probabilities in [0, 1]."""

    __slots__ = ("dims", "values")

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"grid values must be 3-D, got shape {values.shape}")
        if any(d < 1 for d in values.shape):
            raise ValueError(f"grid dims must be positive, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("grid values must lie in [0, 1]")
        self.dims = values.shape
        self.values = np.ascontiguousarray(values)
        self.values.flags.writeable = False

    @property
    def is_cubic(self):
        return self.dims[0] == self.dims[1] == self.dims[2]

    def cell_centers(self):
        """World coordinates of all cell centers, shape (Dx, Dy, Dz, 3)."""
        axes = [(-0.5 + (np.arange(d) + 0.5) / d) for d in self.dims]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def __eq__(self, other):
        return isinstance(other, OccupancyGrid) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"OccupancyGrid(dims={self.dims})"


def new_grid(dims, fill):
    """Create a constant grid with the given dims and fill probability."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    fill = float(fill)
    if not (0.0 <= fill <= 1.0):
        raise ValueError(f"fill must be in [0, 1], got {fill}")
    return OccupancyGrid(np.full(dims, fill))


def _check_point(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"point must be a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point must be finite, got {p}")
    return p


def sample_trilinear(grid, p):
    """Trilinearly interpolate the grid at world point p (outside-is-empty)."""
    value, _, _, _ = sample_trilinear_grad(grid, p)
    return value


def sample_trilinear_grad(grid, p):
    """Sample the grid at p with derivatives.

    Returns (value, corner_indices, corner_weights, spatial_grad) where
    corner_indices is (k, 3) int for the in-range neighbors (k <= 8),
    corner_weights the matching interpolation coefficients (d value / d cell),
    and spatial_grad the 3-vector d value / d p.
    """
    p = _check_point(p)
    v = grid.values
    dims = np.array(grid.dims, dtype=np.float64)
    g = (p + 0.5) * dims - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0

    value = 0.0
    spatial = np.zeros(3)
    idx_list = []
    w_list = []
    for dx, dy, dz in itertools.product((0, 1), repeat=3):
        ix, iy, iz = i0[0] + dx, i0[1] + dy, i0[2] + dz
        wx = f[0] if dx else 1.0 - f[0]
        wy = f[1] if dy else 1.0 - f[1]
        wz = f[2] if dz else 1.0 - f[2]
        sx = 1.0 if dx else -1.0
        sy = 1.0 if dy else -1.0
        sz = 1.0 if dz else -1.0
        in_range = (
            0 <= ix < grid.dims[0]
            and 0 <= iy < grid.dims[1]
            and 0 <= iz < grid.dims[2]
        )
        if not in_range:
            continue
        cell = v[ix, iy, iz]
        w = wx * wy * wz
        value += w * cell
        # d value / d g, chained with d g / d p = D per axis
        spatial[0] += sx * wy * wz * cell * dims[0]
        spatial[1] += wx * sy * wz * cell * dims[1]
        spatial[2] += wx * wy * sz * cell * dims[2]
        idx_list.append((ix, iy, iz))
        w_list.append(w)

    indices = np.array(idx_list, dtype=np.int64).reshape(-1, 3)
    weights = np.array(w_list, dtype=np.float64)
    return value, indices, weights, spatial


def sample_trilinear_batch(grid, points):
    """Vectorized trilinear sampling of an (M, 3) array of world points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be (M, 3), got {points.shape}")
    v = grid.values
    dims = np.array(grid.dims)
    g = (points + 0.5) * dims - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0

    out = np.zeros(len(points))
    for dx, dy, dz in itertools.product((0, 1), repeat=3):
        idx = i0 + (dx, dy, dz)
        valid = np.all((idx >= 0) & (idx < dims), axis=1)
        w = (
            (f[:, 0] if dx else 1.0 - f[:, 0])
            * (f[:, 1] if dy else 1.0 - f[:, 1])
            * (f[:, 2] if dz else 1.0 - f[:, 2])
        )
        ic = np.clip(idx, 0, dims - 1)
        out += np.where(valid, w * v[ic[:, 0], ic[:, 1], ic[:, 2]], 0.0)
    return out


def _cube_rotations():
    """The 24 proper rotations of the cube as signed permutation matrices."""
    rots = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=np.int64)
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if round(np.linalg.det(m)) == 1:
                rots.append(m)
    return rots


#: All 24 exact cube rotations; index 0 is the identity.
CUBE_ROTATIONS = _cube_rotations()
assert np.array_equal(CUBE_ROTATIONS[0], np.eye(3, dtype=np.int64))


def as_rotation_matrix(rot):
    """Accept an index into CUBE_ROTATIONS or an explicit signed permutation matrix."""
    if np.isscalar(rot):
        return CUBE_ROTATIONS[int(rot)]
    m = np.asarray(rot)
    if m.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {m.shape}")
    mi = np.rint(m).astype(np.int64)
    if not np.allclose(m, mi) or round(np.linalg.det(mi)) != 1 or np.any(np.abs(mi).sum(axis=0) != 1):
        raise ValueError("rotation is not one of the 24 proper cube rotations")
    return mi


def rotate_axis_aligned(grid, rot):
    """Rotate a cubic grid by an exact cube rotation (a cell permutation).

    The returned grid holds the rotated object: new(M @ x) == old(x) for every
    cell center x, with M the rotation matrix.
    """
    if not grid.is_cubic:
        raise ValueError(f"rotate_axis_aligned requires a cubic grid, got dims {grid.dims}")
    m = as_rotation_matrix(rot)
    d = grid.dims[0]
    jx, jy, jz = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    j = (jx, jy, jz)
    src = []
    for k in range(3):  # input axis k reads from output axis r (sign s)
        r = int(np.flatnonzero(m[:, k])[0])
        s = int(m[r, k])
        src.append(j[r] if s > 0 else d - 1 - j[r])
    return OccupancyGrid(grid.values[src[0], src[1], src[2]])


def write_voxels(path, grid):
    """Write a grid in the MVOX binary format (f32 little-endian, x fastest)."""
    header = MVOX_MAGIC + struct.pack("<IIII", MVOX_VERSION, *grid.dims)
    payload = grid.values.astype("<f4").ravel(order="F").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_voxels(path):
    """Read a grid from the MVOX binary format."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MVOX_MAGIC:
        raise ValueError(f"{path}: not an MVOX file")
    version, dx, dy, dz = struct.unpack_from("<IIII", data, 4)
    if version != MVOX_VERSION:
        raise ValueError(f"{path}: unsupported MVOX version {version}")
    n = dx * dy * dz
    expected = 20 + 4 * n
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f4", count=n, offset=20)
    values = flat.astype(np.float64).reshape((dx, dy, dz), order="F")
    return OccupancyGrid(values)
