"""Pose- and shape-differentiable view consistency loss.

Each pixel's ray is sampled at fixed depths; sampled occupancies induce a
distribution over ray termination events (stop at sample i, or escape), each
event is charged a cost against the observed depth/mask value, and the
per-pixel loss is the expected event cost. The image loss is the mean over the
selected pixel lattice. Gradients flow through the termination products into
grid cells (via the trilinear weights) and into the camera parameters (via the
spatial gradients and point Jacobians).

Note the escape event (index N+1) carries a cost too: for masks a foreground
pixel over empty space must be penalized, and for depth the escape cost is
|d_p - d_bg| so background pixels agree with empty space at zero cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .camera import UnsupportedPoseError, pixel_ray_point, camera_to_shape_point
from .grid import sample_trilinear_grad

DEPTH = "depth"
MASK = "mask"


class VerificationImage:
    """A depth map or soft foreground mask used as a consistency target.

    values is (height, width); depth images store z-depth in world units with
    background pixels at d_bg, masks store s in [0, 1].
    """

    __slots__ = ("kind", "values", "d_bg")

    def __init__(self, kind, values, d_bg=None):
        if kind not in (DEPTH, MASK):
            raise ValueError(f"kind must be '{DEPTH}' or '{MASK}', got {kind!r}")
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (height, width), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        if kind == DEPTH:
            if d_bg is None:
                raise ValueError("depth images need a background depth d_bg")
            d_bg = float(d_bg)
            if values.min() <= 0.0 or values.max() > d_bg:
                raise ValueError("depth values must satisfy 0 < d <= d_bg")
        else:
            if d_bg is not None:
                raise ValueError("masks do not carry a background depth")
            if values.min() < 0.0 or values.max() > 1.0:
                raise ValueError("mask values must lie in [0, 1]")
        self.kind = kind
        self.values = np.ascontiguousarray(values)
        self.values.flags.writeable = False
        self.d_bg = d_bg

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass
class RayEvaluation:
    """Per-ray diagnostics: occupancies, q(z), event costs, and the loss."""

    occupancies: np.ndarray
    termination_probs: np.ndarray
    event_costs: np.ndarray
    loss: float


@dataclass
class LossGradients:
    d_grid: np.ndarray
    d_azimuth: float
    d_elevation: float
    d_translation: np.ndarray


def termination_probs(occupancies):
    """Distribution over termination events: q(i) = o_i prod_{j<i}(1 - o_j), plus escape."""
    o = np.asarray(occupancies, dtype=np.float64)
    if o.ndim != 1:
        raise ValueError(f"occupancies must be 1-D, got shape {o.shape}")
    if o.size and (o.min() < 0.0 or o.max() > 1.0):
        raise ValueError("occupancies must lie in [0, 1]")
    alive = np.cumprod(1.0 - o)
    q = np.empty(o.size + 1)
    q[0] = o[0] if o.size else 1.0
    q[1:-1] = o[1:] * alive[:-1]
    q[-1] = alive[-1] if o.size else 1.0
    return q


def event_costs(kind, v_p, sampling, d_bg=None):
    """Costs psi(1..N+1) for terminating at each sample or escaping."""
    depths = sampling.depths
    psi = np.empty(len(depths) + 1)
    if kind == DEPTH:
        if d_bg is None:
            d_bg = sampling.d_max
        psi[:-1] = np.abs(v_p - depths)
        psi[-1] = abs(v_p - d_bg)
    elif kind == MASK:
        psi[:-1] = abs(v_p - 1.0)
        psi[-1] = v_p
    else:
        raise ValueError(f"unknown observation kind {kind!r}")
    return psi


def _check_pixel(intr, pixel):
    iu, iv = pixel
    if not (0 <= iu < intr.width and 0 <= iv < intr.height):
        raise ValueError(f"pixel {pixel} outside {intr.width}x{intr.height} image")
    return iu, iv


def ray_occupancies(grid, pose, intr, sampling, pixel):
    """Sampled occupancies along one pixel's ray, with per-sample grid weights
    and spatial gradients (reference scalar path)."""
    iu, iv = _check_pixel(intr, pixel)
    occ = np.empty(sampling.n_samples)
    weights = []
    spatial = np.empty((sampling.n_samples, 3))
    for i, d in enumerate(sampling.depths):
        l = pixel_ray_point(intr, iu + 0.5, iv + 0.5, d)
        p = camera_to_shape_point(pose, l)
        value, idx, w, sg = sample_trilinear_grad(grid, p)
        occ[i] = value
        weights.append((idx, w))
        spatial[i] = sg
    return occ, weights, spatial


def evaluate_ray(grid, pose, intr, sampling, pixel, image):
    """Full per-ray evaluation against the observation at `pixel`."""
    iu, iv = _check_pixel(intr, pixel)
    occ, _, _ = ray_occupancies(grid, pose, intr, sampling, pixel)
    q = termination_probs(occ)
    psi = event_costs(image.kind, float(image.values[iv, iu]), sampling, image.d_bg)
    return RayEvaluation(occ, q, psi, float(q @ psi))


def pixel_loss(grid, pose, intr, sampling, pixel, image):
    """Expected event cost for a single pixel."""
    return evaluate_ray(grid, pose, intr, sampling, pixel, image).loss


def _pixel_lattice(intr, image, pixel_stride):
    if image.width != intr.width or image.height != intr.height:
        raise ValueError(
            f"image is {image.width}x{image.height} but intrinsics say "
            f"{intr.width}x{intr.height}"
        )
    if pixel_stride < 1:
        raise ValueError(f"pixel_stride must be >= 1, got {pixel_stride}")
    iu = np.arange(0, intr.width, pixel_stride)
    iv = np.arange(0, intr.height, pixel_stride)
    # pixel-major order: rows (v) outer, columns (u) inner
    vv, uu = np.meshgrid(iv, iu, indexing="ij")
    uu = uu.ravel()
    vv = vv.ravel()
    us = uu + 0.5
    vs = vv + 0.5
    vobs = np.ascontiguousarray(image.values[vv, uu])
    return us.astype(np.float64), vs.astype(np.float64), vobs


def _kernel_args(grid, pose, intr, sampling, image, pixel_stride):
    us, vs, vobs = _pixel_lattice(intr, image, pixel_stride)
    r = np.ascontiguousarray(pose.rotation())
    t = np.ascontiguousarray(pose.translation)
    depths = np.ascontiguousarray(sampling.depths)
    is_depth = image.kind == DEPTH
    d_bg = image.d_bg if is_depth else 0.0
    return us, vs, vobs, r, t, depths, is_depth, d_bg


def image_loss(grid, pose, intr, sampling, image, pixel_stride=1):
    """Mean expected event cost over the strided pixel lattice."""
    us, vs, vobs, r, t, depths, is_depth, d_bg = _kernel_args(
        grid, pose, intr, sampling, image, pixel_stride
    )
    losses = kernels().image_forward(
        grid.values, r, t, us, vs,
        float(intr.fu), float(intr.fv), float(intr.u0), float(intr.v0),
        depths, is_depth, vobs, float(d_bg),
    )
    return float(losses.sum() / losses.size)


def image_loss_grad(grid, pose, intr, sampling, image, pixel_stride=1, pose_gradients=True):
    """Image loss plus analytic gradients.

    With pose_gradients=True (default) the pose must be Euler-parametrized;
    angle and translation gradients are filled in. With pose_gradients=False
    only the grid gradient is computed (any pose parametrization).
    """
    if pose_gradients:
        _, dra, dre = pose.rotation_with_derivatives()
        dra = np.ascontiguousarray(dra)
        dre = np.ascontiguousarray(dre)
    else:
        dra = np.zeros((3, 3))
        dre = np.zeros((3, 3))
    us, vs, vobs, r, t, depths, is_depth, d_bg = _kernel_args(
        grid, pose, intr, sampling, image, pixel_stride
    )
    losses, d_grid, d_az, d_el, d_t = kernels().image_forward_backward(
        grid.values, r, t, dra, dre, us, vs,
        float(intr.fu), float(intr.fv), float(intr.u0), float(intr.v0),
        depths, is_depth, vobs, float(d_bg),
        1.0 / us.size, pose_gradients,
    )
    loss = float(losses.sum() / losses.size)
    grads = LossGradients(d_grid, float(d_az), float(d_el), np.asarray(d_t))
    return loss, grads
