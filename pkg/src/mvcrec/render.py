"""Ground-truth depth/mask renderer over hard-thresholded occupancy grids.

The renderer marches each pixel's ray at `oversample` times the loss's sample
rate and tests whether the cell containing each point is solid (cell value >=
threshold). It deliberately avoids the probabilistic termination machinery so
it can serve as an independent oracle for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .consistency import DEPTH, MASK, VerificationImage


@dataclass(frozen=True)
class RenderSettings:
    threshold: float = 0.5
    oversample: int = 4
    d_bg: float | None = None  # defaults to sampling.d_max

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.oversample < 1:
            raise ValueError(f"oversample must be >= 1, got {self.oversample}")


def _march(grid, pose, intr, sampling, settings):
    n_fine = sampling.n_samples * settings.oversample
    step = (sampling.d_max - sampling.d_min) / n_fine
    fine_depths = sampling.d_min + (np.arange(n_fine) + 0.5) * step
    d_bg = settings.d_bg if settings.d_bg is not None else sampling.d_max
    iu = np.arange(intr.width)
    iv = np.arange(intr.height)
    vv, uu = np.meshgrid(iv, iu, indexing="ij")
    us = (uu.ravel() + 0.5).astype(np.float64)
    vs = (vv.ravel() + 0.5).astype(np.float64)
    depth, mask = kernels().render_march(
        grid.values, float(settings.threshold),
        np.ascontiguousarray(pose.rotation()), np.ascontiguousarray(pose.translation),
        us, vs, float(intr.fu), float(intr.fv), float(intr.u0), float(intr.v0),
        fine_depths, float(d_bg),
    )
    shape = (intr.height, intr.width)
    return depth.reshape(shape), mask.reshape(shape), d_bg


def render_depth(grid, pose, intr, sampling, settings=RenderSettings()):
    """Depth of the first solid sample per pixel; d_bg where no sample is solid."""
    depth, _, d_bg = _march(grid, pose, intr, sampling, settings)
    return VerificationImage(DEPTH, depth, d_bg=d_bg)


def render_mask(grid, pose, intr, sampling, settings=RenderSettings()):
    """Binary foreground mask: 1 iff any marched sample is solid."""
    _, mask, _ = _march(grid, pose, intr, sampling, settings)
    return VerificationImage(MASK, mask)
