"""Multi-view reprojection loss: per-view GIoU consistency plus a
penalty-reduced focal term on center heatmaps.

The scored quantity for a pose is the average of (1 - GIoU) between its
clamped tight 2D reprojection and the matched detection box in every other
observing view. Views where projection fails (behind camera, clipped away)
are excluded and the view count reduced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .association import MultiViewAnnotation
from .box3d import Pose7DoF, giou_2d, project_to_box2d
from .camera import Camera
from .errors import (
    BehindCamera,
    DimensionMismatch,
    EmptyAfterClamp,
    NonDifferentiablePoint,
    NoUsableViews,
)

HEATMAP_EPS = 1e-7
DEFAULT_STRIDE = 4
DEFAULT_FOCAL_ALPHA = 2.0
DEFAULT_FOCAL_BETA = 4.0
_GRADIENT_STEP = 1e-4     # relative to 1 m / 1 rad parameter scales


@dataclass(frozen=True)
class Heatmap:
    """Center-point heatmap on a stride-downsampled grid."""

    values: np.ndarray
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("heatmap values must be 2D (height, width)")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("heatmap values must lie in [0, 1]")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    giou_term: float
    focal_term: float
    per_view_giou: dict           # pose index -> {camera_id: giou}
    views_used: int
    skipped: dict = field(default_factory=dict)   # pose index -> reason

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "giou_term": self.giou_term,
            "focal_term": self.focal_term,
            "views_used": self.views_used,
            "per_view_giou": {str(k): v for k, v in self.per_view_giou.items()},
            "skipped": {str(k): v for k, v in self.skipped.items()},
        }


def heatmap_dims_for_image(width: int, height: int,
                           stride: int = DEFAULT_STRIDE) -> tuple[int, int]:
    """(width_cells, height_cells) covering a width x height image."""
    return (math.ceil(width / stride), math.ceil(height / stride))


def render_center_heatmap(centers, sizes, dims: tuple[int, int],
                          stride: int = DEFAULT_STRIDE) -> Heatmap:
    """Splat one Gaussian per center, max-composited, peak exactly 1.

    `centers` are pixel (u, v) pairs; `sizes` the matching per-object pixel
    (width, height) pairs controlling sigma = max(1, min(w, h) / (6 * stride))
    in cells.
    """
    width_cells, height_cells = dims
    values = np.zeros((height_cells, width_cells))
    if len(centers) != len(sizes):
        raise ValueError("centers and sizes must align")
    for (u, v), (bw, bh) in zip(centers, sizes):
        cx = min(max(int(u / stride), 0), width_cells - 1)
        cy = min(max(int(v / stride), 0), height_cells - 1)
        sigma = max(1.0, min(bw, bh) / (6.0 * stride))
        radius = int(math.ceil(3.0 * sigma))
        x_lo, x_hi = max(0, cx - radius), min(width_cells, cx + radius + 1)
        y_lo, y_hi = max(0, cy - radius), min(height_cells, cy + radius + 1)
        ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
        patch = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma ** 2))
        region = values[y_lo:y_hi, x_lo:x_hi]
        np.maximum(region, patch, out=region)
    return Heatmap(values=values, stride=stride)


def render_peak_heatmap(centers, dims: tuple[int, int],
                        stride: int = DEFAULT_STRIDE) -> Heatmap:
    """Unit peaks at center cells, zero elsewhere (the idealized detector
    output that the focal loss drives predictions toward)."""
    width_cells, height_cells = dims
    values = np.zeros((height_cells, width_cells))
    for u, v in centers:
        cx = min(max(int(u / stride), 0), width_cells - 1)
        cy = min(max(int(v / stride), 0), height_cells - 1)
        values[cy, cx] = 1.0
    return Heatmap(values=values, stride=stride)


def focal_loss(pred: Heatmap, target: Heatmap,
               alpha: float = DEFAULT_FOCAL_ALPHA,
               beta: float = DEFAULT_FOCAL_BETA) -> float:
    """Penalty-reduced pixelwise focal loss between center heatmaps.

    At target peak cells (t == 1): -(1-p)^alpha * log(p); elsewhere
    -(1-t)^beta * p^alpha * log(1-p). Normalized by max(1, #peaks). Zero
    iff pred is 1 at every peak and 0 elsewhere.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if pred.values.shape != target.values.shape:
        raise DimensionMismatch(
            f"pred {pred.values.shape} vs target {target.values.shape}")
    raw = pred.values
    p = np.clip(raw, HEATMAP_EPS, 1.0 - HEATMAP_EPS)
    t = target.values
    peaks = t >= 1.0
    # Ideal cells contribute exactly zero (the continuous extension at the
    # endpoints), so a perfect peak map scores 0, not epsilon noise.
    peak_hit = peaks & (raw >= 1.0)
    rest_zero = ~peaks & (raw <= 0.0)
    loss_peaks = -np.where(peak_hit, 0.0,
                           (1.0 - p) ** alpha * np.log(p))[peaks].sum()
    neg = ~peaks
    rest = -np.where(rest_zero, 0.0,
                     (1.0 - t) ** beta * p ** alpha * np.log(1.0 - p))
    loss_rest = rest[neg].sum()
    return float((loss_peaks + loss_rest) / max(1, int(peaks.sum())))


def reprojection_giou_term(cameras: dict[str, Camera], pose_world: Pose7DoF,
                           annotation: MultiViewAnnotation,
                           exclude_camera: str | None = None,
                           ) -> tuple[float, dict[str, float], int]:
    """Average (1 - GIoU) between the pose's clamped reprojection and the
    annotation's 2D box in every member view except `exclude_camera`.

    Returns (term, per-view GIoU map, number of usable views). Views whose
    projection fails are skipped; raises NoUsableViews when none remain.
    """
    per_view: dict[str, float] = {}
    for cam_id, det in annotation.members.items():
        if cam_id == exclude_camera:
            continue
        camera = cameras[cam_id]
        try:
            projected = project_to_box2d(camera, pose_world, clamp=True)
        except (BehindCamera, EmptyAfterClamp):
            continue
        per_view[cam_id] = giou_2d(projected, det.box)
    if not per_view:
        raise NoUsableViews(
            f"pose is unscorable against annotation {annotation.cluster_id}")
    n = len(per_view)
    term = sum(1.0 - g for g in per_view.values()) / n
    return term, per_view, n


def match_poses_to_annotations(poses: list[Pose7DoF],
                               annotations: list[MultiViewAnnotation],
                               max_distance: float) -> dict[int, int]:
    """Greedy nearest-centroid matching of poses to annotations.

    Pairs are taken in increasing footprint-center distance; each pose and
    each annotation is used at most once; pairs farther than `max_distance`
    are never formed. Returns {pose index: annotation index}.
    """
    candidates = []
    for i, pose in enumerate(poses):
        for j, ann in enumerate(annotations):
            d = math.hypot(pose.x - ann.centroid[0], pose.y - ann.centroid[1])
            if d <= max_distance:
                candidates.append((d, i, j))
    candidates.sort()
    matched: dict[int, int] = {}
    used_ann: set[int] = set()
    for _, i, j in candidates:
        if i in matched or j in used_ann:
            continue
        matched[i] = j
        used_ann.add(j)
    return matched


def multi_view_loss(cameras: dict[str, Camera],
                    poses: list[Pose7DoF],
                    annotations: list[MultiViewAnnotation],
                    detection_camera_id: str,
                    detections_for_focal=None,
                    match_distance: float = 2.0,
                    min_views: int = 2,
                    stride: int = DEFAULT_STRIDE,
                    alpha: float = DEFAULT_FOCAL_ALPHA,
                    beta: float = DEFAULT_FOCAL_BETA) -> LossBreakdown:
    """Full loss for one image: reprojection GIoU term plus focal term.

    Poses are predictions on `detection_camera_id`'s image, already in the
    world frame. Each is matched to an annotation (nearest centroid within
    `match_distance`); its GIoU term uses the annotation's other views.
    The focal term compares unit peaks at the poses' projected box centers
    against the Gaussian map rendered from `detections_for_focal` (that
    camera's 2D detections; defaults to the annotations' members there).
    Annotations with fewer than `min_views` members are not scored. An
    empty pose list short-circuits to a zero loss with views_used = 0.
    """
    if not poses:
        return LossBreakdown(total=0.0, giou_term=0.0, focal_term=0.0,
                             per_view_giou={}, views_used=0)
    det_camera = cameras[detection_camera_id]
    scorable = [a for a in annotations if a.n_views >= min_views]
    matches = match_poses_to_annotations(poses, scorable, match_distance)

    per_view_giou: dict[int, dict[str, float]] = {}
    skipped: dict[int, str] = {}
    pose_terms = []
    total_views = 0
    for i, pose in enumerate(poses):
        if i not in matches:
            skipped[i] = "unmatched"
            continue
        annotation = scorable[matches[i]]
        try:
            term, per_view, n = reprojection_giou_term(
                cameras, pose, annotation, exclude_camera=detection_camera_id)
        except NoUsableViews:
            skipped[i] = "no_usable_views"
            continue
        per_view_giou[i] = per_view
        pose_terms.append(term)
        total_views += n

    giou_term = float(np.mean(pose_terms)) if pose_terms else 0.0

    # Focal term on the detection camera: predicted centers are the clamped
    # tight-box centers of the scored poses; the target map comes from the
    # 2D detections on that camera.
    if detections_for_focal is None:
        detections_for_focal = [a.members[detection_camera_id] for a in scorable
                                if detection_camera_id in a.members]
    target_centers = [d.box.center for d in detections_for_focal]
    target_sizes = [d.box.size for d in detections_for_focal]
    pred_centers = []
    for i in per_view_giou:
        try:
            box = project_to_box2d(det_camera, poses[i], clamp=True)
        except (BehindCamera, EmptyAfterClamp):
            continue
        pred_centers.append(box.center)
    dims = heatmap_dims_for_image(det_camera.intrinsics.width,
                                  det_camera.intrinsics.height, stride)
    target = render_center_heatmap(target_centers, target_sizes, dims, stride)
    pred = render_peak_heatmap(pred_centers, dims, stride)
    focal_term = focal_loss(pred, target, alpha=alpha, beta=beta)

    return LossBreakdown(
        total=giou_term + focal_term,
        giou_term=giou_term,
        focal_term=focal_term,
        per_view_giou=per_view_giou,
        views_used=total_views,
        skipped=skipped)


def _pose_from_params(params: np.ndarray) -> Pose7DoF:
    return Pose7DoF(x=params[0], y=params[1], z=params[2],
                    l=params[3], w=params[4], h=params[5], yaw=params[6])


def _pose_params(pose: Pose7DoF) -> np.ndarray:
    return np.array([pose.x, pose.y, pose.z, pose.l, pose.w, pose.h, pose.yaw])


def _term_with_signature(cameras, params, annotation, exclude_camera):
    """GIoU term plus the validity/clamp signature used to detect the hard
    kinks: views entering or leaving usability and image-boundary clamps
    switching on or off. Milder interior switches (which corner attains a
    tight-box edge, which box wins a min/max inside GIoU) are left to the
    finite difference; central differences stay meaningful across those.
    """
    pose = _pose_from_params(params)
    per_view = {}
    signature = []
    for cam_id, det in sorted(annotation.members.items()):
        if cam_id == exclude_camera:
            continue
        camera = cameras[cam_id]
        try:
            unclamped = project_to_box2d(camera, pose, clamp=False)
        except BehindCamera:
            signature.append((cam_id, "behind"))
            continue
        intr = camera.intrinsics
        clamp_flags = (unclamped.x_min < 0.0, unclamped.y_min < 0.0,
                       unclamped.x_max > intr.width, unclamped.y_max > intr.height)
        try:
            projected = project_to_box2d(camera, pose, clamp=True)
        except EmptyAfterClamp:
            signature.append((cam_id, "empty"))
            continue
        signature.append((cam_id, clamp_flags))
        per_view[cam_id] = giou_2d(projected, det.box)
    if not per_view:
        raise NoUsableViews("no usable views at probe point")
    term = sum(1.0 - g for g in per_view.values()) / len(per_view)
    return term, tuple(signature)


def loss_gradient(cameras: dict[str, Camera], pose_world: Pose7DoF,
                  annotation: MultiViewAnnotation,
                  exclude_camera: str | None = None,
                  step: float = _GRADIENT_STEP) -> np.ndarray:
    """Central-difference gradient of the reprojection GIoU term with
    respect to (x, y, z, l, w, h, yaw).

    Raises NonDifferentiablePoint when a probe step changes which views are
    usable or which image-boundary clamps are active (the term has a kink
    there and the finite difference would be meaningless).
    """
    params = _pose_params(pose_world)
    grad = np.empty(7)
    for i in range(7):
        plus = params.copy()
        minus = params.copy()
        plus[i] += step
        minus[i] -= step
        if i in (3, 4, 5) and minus[i] <= 0:
            raise NonDifferentiablePoint("probe crosses a zero dimension")
        try:
            f_plus, sig_plus = _term_with_signature(
                cameras, plus, annotation, exclude_camera)
            f_minus, sig_minus = _term_with_signature(
                cameras, minus, annotation, exclude_camera)
        except NoUsableViews as exc:
            raise NonDifferentiablePoint(str(exc)) from exc
        if sig_plus != sig_minus:
            raise NonDifferentiablePoint(
                f"probe along parameter {i} crosses a projection/clamp boundary")
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad
