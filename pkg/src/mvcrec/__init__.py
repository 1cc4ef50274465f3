"""Differentiable multi-view ray consistency over voxel occupancy grids.

Shape lives on a probabilistic occupancy grid over the unit cube; each
depth/mask view contributes an expected ray-termination cost that is
differentiable in both the grid and the camera pose, so a shape and per-view
poses can be recovered jointly by gradient descent. Includes a hard-threshold
renderer as the test oracle, an instance-level reconstruction optimizer with
multistart pose hypotheses, evaluation metrics (IoU with threshold search,
rotation accuracy, frame alignment), and a batch CLI.
"""

from ._backend import backend_name
from .camera import (
    Intrinsics,
    Pose,
    RaySampling,
    UnsupportedPoseError,
    angular_distance,
    camera_to_shape_point,
    default_sampling,
    euler_to_matrix,
    look_at_camera,
    pixel_ray_point,
    read_camera_json,
    write_camera_json,
)
from .consistency import (
    DEPTH,
    MASK,
    LossGradients,
    RayEvaluation,
    VerificationImage,
    event_costs,
    evaluate_ray,
    image_loss,
    image_loss_grad,
    pixel_loss,
    ray_occupancies,
    termination_probs,
)
from .evaluation import (
    AlignmentResult,
    PoseMetrics,
    align_frames,
    best_threshold,
    pose_metrics,
    voxel_iou,
)
from .grid import (
    CUBE_ROTATIONS,
    OccupancyGrid,
    new_grid,
    read_voxels,
    rotate_axis_aligned,
    sample_trilinear,
    sample_trilinear_batch,
    sample_trilinear_grad,
    write_voxels,
)
from .reconstruct import (
    AdamState,
    FullyKnown,
    InitSettings,
    KnownTranslation,
    ReconstructionError,
    ReconstructionProblem,
    ReconstructionResult,
    Unknown,
    View,
    adam_step,
    optimize_instance,
    softmin,
)
from .render import RenderSettings, render_depth, render_mask
from .shapes import c_shape, generate_shape

__version__ = "0.1.0"
