"""Multi-view geometry toolkit for weakly supervised 7DoF vehicle pose
estimation: calibration, cross-view association, the reprojection loss,
pose refinement, evaluation metrics, and a synthetic-scene oracle."""

from .box3d import Box2D, BevRect, Pose7DoF, giou_2d, iou_2d, iou_3d, iou_bev
from .camera import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    GroundHomography,
    PointCorrespondence,
    camera_to_world_pose,
    cast_ray_to_ground,
    project_point,
    solve_homography,
    solve_pnp,
)

__all__ = [
    "Box2D", "BevRect", "Pose7DoF", "giou_2d", "iou_2d", "iou_3d", "iou_bev",
    "Camera", "CameraExtrinsics", "CameraIntrinsics", "GroundHomography",
    "PointCorrespondence", "camera_to_world_pose", "cast_ray_to_ground",
    "project_point", "solve_homography", "solve_pnp",
]

__version__ = "0.1.0"
