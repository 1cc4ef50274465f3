import numpy as np
import pytest

from mvcrec.camera import euler_to_matrix
from mvcrec.evaluation import (
    THRESHOLD_GRID,
    align_frames,
    best_threshold,
    pose_metrics,
    voxel_iou,
)
from mvcrec.grid import CUBE_ROTATIONS, OccupancyGrid, rotate_axis_aligned
from mvcrec.shapes import generate_shape


def binary_grid(seed, d=8):
    rng = np.random.default_rng(seed)
    return OccupancyGrid((rng.uniform(size=(d, d, d)) > 0.6).astype(float))


class TestVoxelIoU:
    def test_identical_binary_grids(self):
        g = binary_grid(0)
        assert voxel_iou(g, g, 0.5, 0.5) == 1.0

    def test_disjoint_solids(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = 1.0
        b = np.zeros((2, 2, 2))
        b[1, 1, 1] = 1.0
        assert voxel_iou(OccupancyGrid(a), OccupancyGrid(b), 0.5, 0.5) == 0.0

    def test_counted_example(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = a[0, 0, 1] = 1.0
        b = np.zeros((2, 2, 2))
        b[0, 0, 0] = b[1, 1, 1] = 1.0
        assert voxel_iou(OccupancyGrid(a), OccupancyGrid(b), 0.5, 0.5) == pytest.approx(1 / 3)

    def test_empty_union_is_one(self):
        z = OccupancyGrid(np.zeros((2, 2, 2)))
        assert voxel_iou(z, z, 0.5, 0.5) == 1.0

    def test_symmetric_under_swap(self):
        a, b = binary_grid(1), binary_grid(2)
        rng = np.random.default_rng(3)
        sa = OccupancyGrid(rng.uniform(size=(8, 8, 8)))
        sb = OccupancyGrid(rng.uniform(size=(8, 8, 8)))
        assert voxel_iou(sa, sb, 0.3, 0.7) == voxel_iou(sb, sa, 0.7, 0.3)

    def test_rejects_dim_mismatch(self):
        with pytest.raises(ValueError):
            voxel_iou(binary_grid(0, 8), binary_grid(0, 4))


class TestBestThreshold:
    def test_binary_preds_tie_break_to_smallest(self):
        gts = [binary_grid(i) for i in range(3)]
        tau, iou = best_threshold(gts, gts)
        assert tau == pytest.approx(0.05)
        assert iou == 1.0

    def test_scaled_pred_recovers_support(self):
        gt = binary_grid(4)
        pred = OccupancyGrid(gt.values * 0.4)
        tau, iou = best_threshold([pred], [gt])
        assert tau <= 0.4 + 1e-12
        assert iou == 1.0

    def test_matches_bruteforce_scan(self):
        rng = np.random.default_rng(5)
        preds = [OccupancyGrid(rng.uniform(size=(8, 8, 8))) for _ in range(2)]
        gts = [binary_grid(6), binary_grid(7)]
        tau, iou = best_threshold(preds, gts)
        best = (-1.0, None)
        for t in THRESHOLD_GRID:
            mean = np.mean([voxel_iou(p, g, t, 0.5) for p, g in zip(preds, gts)])
            if mean > best[0]:
                best = (mean, t)
        assert iou == pytest.approx(best[0])
        assert tau == pytest.approx(best[1])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            best_threshold([], [])


class TestAlignFrames:
    def test_already_aligned_returns_identity(self):
        gts = [binary_grid(i) for i in range(4)]
        res = align_frames(gts, gts, mode="exact24")
        assert np.array_equal(res.rotation, np.eye(3))
        assert res.mean_iou_after == 1.0
        assert res.candidates_evaluated == 24

    def test_recovers_inverse_of_cube_rotation(self):
        gts = [binary_grid(i) for i in range(4)]
        for m in (CUBE_ROTATIONS[7], CUBE_ROTATIONS[15]):
            preds = [rotate_axis_aligned(g, m) for g in gts]
            res = align_frames(preds, gts, mode="exact24")
            assert np.array_equal(res.rotation.astype(np.int64), m.T)
            assert res.mean_iou_after == 1.0

    def test_never_below_identity(self):
        rng = np.random.default_rng(8)
        preds = [OccupancyGrid(rng.uniform(size=(8, 8, 8))) for _ in range(3)]
        gts = [binary_grid(i + 20) for i in range(3)]
        identity_iou = np.mean([voxel_iou(p, g, 0.5, 0.5) for p, g in zip(preds, gts)])
        res = align_frames(preds, gts, mode="exact24")
        assert res.mean_iou_after >= identity_iou

    def test_euler_grid_recovers_azimuth_rotation(self):
        rng = np.random.default_rng(9)
        gts = [generate_shape((16, 16, 16), np.random.default_rng(s)) for s in range(3)]
        r45, _, _ = euler_to_matrix(45.0, 0.0)
        # predictions are the ground truths rotated by +45 deg of azimuth
        from mvcrec.evaluation import _resample_rotated

        preds = [_resample_rotated(g, r45) for g in gts]
        res = align_frames(preds, gts, mode="euler", step_deg=15.0)
        # returned rotation should undo the 45 deg turn (within the 15 deg grid)
        r_neg45, _, _ = euler_to_matrix(-45.0, 0.0)
        from mvcrec.camera import angular_distance

        assert angular_distance(res.rotation, r_neg45) <= 15.0 + 1e-9
        assert res.mean_iou_after >= 0.7

    def test_rejects_non_cubic(self):
        g = OccupancyGrid(np.zeros((2, 3, 2)))
        with pytest.raises(ValueError):
            align_frames([g], [g], mode="exact24")


class TestPoseMetrics:
    def test_perfect_predictions(self):
        rs = [euler_to_matrix(a, 10.0)[0] for a in (0.0, 90.0, 260.0)]
        pm = pose_metrics(rs, rs)
        assert pm.acc_30 == 1.0
        assert pm.med_err == pytest.approx(0.0, abs=1e-9)

    def test_strict_inequality_at_30(self):
        # the 30-degree boundary is excluded (strict <); probe it from both
        # sides since the arccos round trip cannot hit 30 exactly
        gt = [euler_to_matrix(0.0, 0.0)[0]]
        assert pose_metrics([euler_to_matrix(30.001, 0.0)[0]], gt).acc_30 == 0.0
        assert pose_metrics([euler_to_matrix(29.999, 0.0)[0]], gt).acc_30 == 1.0

    def test_even_count_median_lower_middle(self):
        gt = [euler_to_matrix(0.0, 0.0)[0]] * 4
        pred = [euler_to_matrix(a, 0.0)[0] for a in (10.0, 20.0, 40.0, 180.0)]
        pm = pose_metrics(pred, gt)
        assert pm.acc_30 == pytest.approx(0.5)
        assert pm.med_err == pytest.approx(20.0, abs=1e-9)

    def test_invariant_to_common_left_rotation(self):
        rng = np.random.default_rng(10)
        gt = [euler_to_matrix(rng.uniform(0, 360), rng.uniform(-90, 90))[0] for _ in range(6)]
        pred = [euler_to_matrix(rng.uniform(0, 360), rng.uniform(-90, 90))[0] for _ in range(6)]
        base = pose_metrics(pred, gt)
        x, _, _ = euler_to_matrix(123.0, -31.0)
        moved = pose_metrics([x @ p for p in pred], [x @ g for g in gt])
        assert moved.acc_30 == base.acc_30
        assert moved.med_err == pytest.approx(base.med_err, abs=1e-9)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            pose_metrics([], [])
