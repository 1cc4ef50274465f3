"""Pinhole cameras, Euler-angle rotations, ray sampling, and the camera-to-shape transform.

Conventions used throughout the package:

* A world point is obtained from a camera-frame point l as  p = R @ (l + t)
  (translation applied in the camera frame, before rotation).
* Euler rotations compose as R = R_y(azimuth) @ R_x(elevation), angles in
  degrees, right-handed about world +Y and +X.
* Pixel (iu, iv) has its center at (iu + 0.5, iv + 0.5).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

GRID_HALF_DIAGONAL = math.sqrt(3.0) / 2.0
_DEG = math.pi / 180.0


class UnsupportedPoseError(ValueError):
    """Raised when an operation needs angle gradients but the pose is a raw matrix."""


@dataclass(frozen=True)
class Intrinsics:
    fu: float
    fv: float
    u0: float
    v0: float
    width: int
    height: int

    def __post_init__(self):
        if self.fu <= 0 or self.fv <= 0:
            raise ValueError(f"focal lengths must be positive, got fu={self.fu}, fv={self.fv}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")


def euler_to_matrix(azimuth_deg, elevation_deg):
    """Rotation R_y(azimuth) @ R_x(elevation) plus per-degree angle derivatives.

    Returns (R, dR_dazimuth, dR_delevation).
    """
    if not (np.isfinite(azimuth_deg) and np.isfinite(elevation_deg)):
        raise ValueError(f"angles must be finite, got ({azimuth_deg}, {elevation_deg})")
    a = azimuth_deg * _DEG
    e = elevation_deg * _DEG
    ca, sa = math.cos(a), math.sin(a)
    ce, se = math.cos(e), math.sin(e)
    ry = np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]])
    dry = np.array([[-sa, 0.0, ca], [0.0, 0.0, 0.0], [-ca, 0.0, -sa]]) * _DEG
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -se, -ce], [0.0, ce, -se]]) * _DEG
    return ry @ rx, dry @ rx, ry @ drx


def _check_rotation(m, tol=1e-6):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {m.shape}")
    if np.abs(m @ m.T - np.eye(3)).max() > tol or abs(np.linalg.det(m) - 1.0) > tol:
        raise ValueError("matrix is not a proper rotation")
    return m


class Pose:
    """Camera extrinsics: rotation (Euler pair or explicit matrix) and translation t.

    World coordinates of a camera-frame point l are R @ (l + t).
    """

    __slots__ = ("azimuth_deg", "elevation_deg", "matrix", "translation")

    def __init__(self, translation, azimuth_deg=None, elevation_deg=None, matrix=None):
        t = np.asarray(translation, dtype=np.float64)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError(f"translation must be a finite 3-vector, got {translation}")
        self.translation = t
        self.translation.flags.writeable = False
        if matrix is not None:
            if azimuth_deg is not None or elevation_deg is not None:
                raise ValueError("give either Euler angles or a matrix, not both")
            self.matrix = _check_rotation(matrix, tol=1e-9)
            self.matrix.flags.writeable = False
            self.azimuth_deg = self.elevation_deg = None
        else:
            if azimuth_deg is None or elevation_deg is None:
                raise ValueError("Euler pose needs both azimuth and elevation")
            az, el = canonical_euler(azimuth_deg, elevation_deg)
            self.azimuth_deg = az
            self.elevation_deg = el
            self.matrix = None

    @classmethod
    def from_euler(cls, azimuth_deg, elevation_deg, translation):
        return cls(translation, azimuth_deg=azimuth_deg, elevation_deg=elevation_deg)

    @classmethod
    def from_matrix(cls, matrix, translation):
        return cls(translation, matrix=matrix)

    @property
    def is_euler(self):
        return self.matrix is None

    def rotation(self):
        if self.is_euler:
            r, _, _ = euler_to_matrix(self.azimuth_deg, self.elevation_deg)
            return r
        return self.matrix

    def rotation_with_derivatives(self):
        if not self.is_euler:
            raise UnsupportedPoseError(
                "angle gradients are undefined for a matrix-parametrized pose"
            )
        return euler_to_matrix(self.azimuth_deg, self.elevation_deg)

    def __repr__(self):
        if self.is_euler:
            rot = f"az={self.azimuth_deg:.3f}, el={self.elevation_deg:.3f}"
        else:
            rot = "matrix"
        return f"Pose({rot}, t={np.array2string(self.translation, precision=4)})"


def canonical_euler(azimuth_deg, elevation_deg):
    """Wrap angles (mod 360) into azimuth [0, 360) x elevation [-90, 90].

    Elevations whose wrapped value falls outside [-90, 90] are rejected: such
    rotations are upside-down relative to the world up axis and cannot be
    re-expressed inside the canonical ranges of this two-angle family.
    """
    az = float(azimuth_deg)
    el = float(elevation_deg)
    if not (np.isfinite(az) and np.isfinite(el)):
        raise ValueError(f"angles must be finite, got ({azimuth_deg}, {elevation_deg})")
    el = (el + 180.0) % 360.0 - 180.0
    if not (-90.0 <= el <= 90.0):
        raise ValueError(f"elevation {elevation_deg} wraps to {el}, outside [-90, 90]")
    return az % 360.0, el


def look_at_camera(azimuth_deg, elevation_deg, distance):
    """Pose of a camera at the given azimuth/elevation looking at the origin.

    The camera center sits at distance * (cos e sin a, sin e, cos e cos a) with
    +Y as world up; the returned pose is in Euler form (the look-at rotation for
    this family is exactly R_y(azimuth + 180) @ R_x(elevation) with
    t = (0, 0, -distance)).
    """
    if abs(elevation_deg) >= 90.0:
        raise ValueError(f"elevation must satisfy |e| < 90, got {elevation_deg}")
    if distance <= GRID_HALF_DIAGONAL:
        raise ValueError(
            f"distance must exceed the grid half-diagonal {GRID_HALF_DIAGONAL:.4f}, got {distance}"
        )
    return Pose.from_euler(
        (azimuth_deg + 180.0) % 360.0, elevation_deg, (0.0, 0.0, -float(distance))
    )


def camera_center(pose):
    """World position of the camera center, R @ t."""
    return pose.rotation() @ pose.translation


def camera_to_shape_point(pose, l, with_jacobians=False):
    """Map a camera-frame point l to the shape frame: p = R @ (l + t).

    With with_jacobians=True returns (p, d_p/d_l, d_p/d_t, d_p/d_azimuth,
    d_p/d_elevation); the angle terms are None for matrix poses.
    """
    l = np.asarray(l, dtype=np.float64)
    if l.shape != (3,) or not np.all(np.isfinite(l)):
        raise ValueError(f"point must be a finite 3-vector, got {l}")
    y = l + pose.translation
    if not with_jacobians:
        return pose.rotation() @ y
    if pose.is_euler:
        r, dra, dre = pose.rotation_with_derivatives()
        return r @ y, r, r, dra @ y, dre @ y
    r = pose.rotation()
    return r @ y, r, r, None, None


def pixel_ray_point(intr, u, v, d):
    """Camera-frame point at depth d on the ray through pixel coordinate (u, v)."""
    if d <= 0:
        raise ValueError(f"depth must be positive, got {d}")
    return np.array([(u - intr.u0) / intr.fu * d, (v - intr.v0) / intr.fv * d, d])


def angular_distance(r_a, r_b):
    """Angle in degrees between two rotations: arccos((trace(Ra Rb^T) - 1) / 2)."""
    r_a = _check_rotation(r_a)
    r_b = _check_rotation(r_b)
    c = (np.trace(r_a @ r_b.T) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True)
class RaySampling:
    """Fixed per-ray depth samples d_i = d_min + (i - 0.5) * (d_max - d_min) / N."""

    n_samples: int
    d_min: float
    d_max: float

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if not (0.0 < self.d_min < self.d_max):
            raise ValueError(f"need 0 < d_min < d_max, got ({self.d_min}, {self.d_max})")

    @property
    def depths(self):
        step = (self.d_max - self.d_min) / self.n_samples
        return self.d_min + (np.arange(self.n_samples) + 0.5) * step


def default_sampling(distance, n_samples=80):
    """Depth samples bracketing the unit cube for a look-at camera at `distance`."""
    return RaySampling(n_samples, distance - GRID_HALF_DIAGONAL, distance + GRID_HALF_DIAGONAL)


def pose_to_dict(pose):
    if pose.is_euler:
        rotation = {"azimuth_deg": pose.azimuth_deg, "elevation_deg": pose.elevation_deg}
    else:
        rotation = {"matrix": [float(x) for x in pose.matrix.ravel()]}
    return {"rotation": rotation, "translation": [float(x) for x in pose.translation]}


def pose_from_dict(d):
    rot = d["rotation"]
    if "matrix" in rot:
        m = np.array(rot["matrix"], dtype=np.float64).reshape(3, 3)
        return Pose.from_matrix(m, d["translation"])
    return Pose.from_euler(rot["azimuth_deg"], rot["elevation_deg"], d["translation"])


def write_camera_json(path, intr, pose):
    doc = {
        "fu": intr.fu,
        "fv": intr.fv,
        "u0": intr.u0,
        "v0": intr.v0,
        "width": intr.width,
        "height": intr.height,
        **pose_to_dict(pose),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_camera_json(path):
    with open(path) as f:
        doc = json.load(f)
    intr = Intrinsics(
        fu=doc["fu"], fv=doc["fv"], u0=doc["u0"], v0=doc["v0"],
        width=int(doc["width"]), height=int(doc["height"]),
    )
    return intr, pose_from_dict(doc)
