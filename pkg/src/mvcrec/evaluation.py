"""Shape and pose evaluation: voxel IoU, optimal-threshold search, frame
alignment, and rotation accuracy metrics.

Because shape and pose are only determined up to a global rotation of the
shared frame, shape/pose metrics are reported after searching for a single
rotation that best aligns predictions to the reference frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import angular_distance, euler_to_matrix
from .grid import CUBE_ROTATIONS, OccupancyGrid, rotate_axis_aligned, sample_trilinear_batch

THRESHOLD_GRID = np.round(np.arange(1, 20) * 0.05, 2)


@dataclass
class PoseMetrics:
    acc_30: float
    med_err: float
    per_instance_errors: list


@dataclass
class AlignmentResult:
    rotation: np.ndarray
    mean_iou_after: float
    candidates_evaluated: int


def voxel_iou(a, b, tau_a=0.5, tau_b=0.5):
    """IoU of the thresholded solids {a >= tau_a} and {b >= tau_b}; 1 if both empty."""
    if a.dims != b.dims:
        raise ValueError(f"grid dims differ: {a.dims} vs {b.dims}")
    sa = a.values >= tau_a
    sb = b.values >= tau_b
    union = np.logical_or(sa, sb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(sa, sb).sum() / union)


def best_threshold(preds, gts):
    """Exhaustive search over tau in {0.05, ..., 0.95} maximizing mean IoU.

    Ground truths are thresholded at 0.5. Ties break toward the smallest tau.
    Returns (tau, mean_iou).
    """
    if not preds or len(preds) != len(gts):
        raise ValueError("need equal-length, non-empty pred/gt lists")
    best_tau = None
    best_iou = -1.0
    for tau in THRESHOLD_GRID:
        mean_iou = float(np.mean([voxel_iou(p, g, tau, 0.5) for p, g in zip(preds, gts)]))
        if mean_iou > best_iou:
            best_iou = mean_iou
            best_tau = float(tau)
    return best_tau, best_iou


def _euler_grid_rotations(step_deg):
    if step_deg <= 0:
        raise ValueError(f"step must be positive, got {step_deg}")
    rotations = []
    for az in np.arange(0.0, 360.0, step_deg):
        for el in np.arange(-90.0, 90.0 + 1e-9, step_deg):
            r, _, _ = euler_to_matrix(az, el)
            rotations.append((az, el, r))
    return rotations


def _resample_rotated(grid, rotation):
    """Grid holding the object rotated by `rotation`, via trilinear resampling."""
    centers = grid.cell_centers().reshape(-1, 3)
    vals = sample_trilinear_batch(grid, centers @ rotation)  # R^T @ c per row
    return OccupancyGrid(np.clip(vals, 0.0, 1.0).reshape(grid.dims))


def align_frames(preds, gts, mode="exact24", step_deg=15.0, set_size=8):
    """Search for the rotation of the predictions that maximizes mean voxel overlap.

    mode "exact24" enumerates the 24 cube rotations (exact cell permutations);
    mode "euler" scans azimuth x elevation on `step_deg` using trilinear
    resampling, thresholding the resampled prediction at 0.5. The alignment set
    is the first `set_size` pairs. Ties break toward the earliest candidate;
    the identity is candidate 0 in exact24 mode.
    """
    if not preds or len(preds) != len(gts):
        raise ValueError("need equal-length, non-empty pred/gt lists")
    pairs = list(zip(preds, gts))[: max(1, set_size)]
    best = None
    count = 0
    if mode == "exact24":
        for m in CUBE_ROTATIONS:
            count += 1
            mean_iou = float(np.mean(
                [voxel_iou(rotate_axis_aligned(p, m), g, 0.5, 0.5) for p, g in pairs]
            ))
            if best is None or mean_iou > best[1]:
                best = (m.astype(np.float64), mean_iou)
    elif mode == "euler":
        for az, el, r in _euler_grid_rotations(step_deg):
            count += 1
            mean_iou = float(np.mean(
                [voxel_iou(_resample_rotated(p, r), g, 0.5, 0.5) for p, g in pairs]
            ))
            if best is None or mean_iou > best[1]:
                best = (r, mean_iou)
    else:
        raise ValueError(f"unknown alignment mode {mode!r}")
    return AlignmentResult(best[0], best[1], count)


def pose_metrics(pred_rotations, gt_rotations, alignment=None):
    """Angular errors of predicted rotations after composing the frame alignment.

    acc_30 counts errors strictly below 30 degrees; the median takes the lower
    middle element for even counts.
    """
    if len(pred_rotations) == 0 or len(pred_rotations) != len(gt_rotations):
        raise ValueError("need equal-length, non-empty rotation lists")
    if alignment is None:
        alignment = np.eye(3)
    errors = [
        angular_distance(alignment @ rp, rg)
        for rp, rg in zip(pred_rotations, gt_rotations)
    ]
    ordered = sorted(errors)
    med = ordered[(len(ordered) - 1) // 2]
    acc = sum(1 for e in errors if e < 30.0) / len(errors)
    return PoseMetrics(acc_30=acc, med_err=med, per_instance_errors=errors)
