"""Cross-view association of 2D detections at one time instance.

Each detection is anchored to a ground-plane point by ray casting, and the
points are grouped into vehicles with DP-means clustering. Clusters never
contain two detections from the same camera.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .box3d import Box2D
from .camera import Camera, cast_ray_to_ground
from .errors import OutOfSceneRadius, RayParallelOrAscending

logger = logging.getLogger(__name__)

ASSOCIATED_CLASSES = ("car", "truck")
DEFAULT_MIN_SCORE = 0.5
DEFAULT_SCENE_RADIUS = 200.0
DEFAULT_MIN_VIEWS = 2
_MAX_ITERATIONS = 100


@dataclass(frozen=True)
class Detection2D:
    camera_id: str
    frame: int
    box: Box2D
    score: float
    label: str = "car"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")


@dataclass(frozen=True)
class GroundPoint:
    detection: Detection2D
    point: tuple[float, float]


@dataclass(frozen=True)
class MultiViewAnnotation:
    cluster_id: int
    frame: int
    members: dict[str, Detection2D]
    centroid: tuple[float, float]

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("annotation needs at least one member")

    @property
    def n_views(self) -> int:
        return len(self.members)


@dataclass
class AssociationDiagnostics:
    """Per-frame record of detections dropped before/after clustering."""

    dropped_class: int = 0
    dropped_score: int = 0
    dropped_ray: int = 0
    dropped_radius: int = 0
    single_view_clusters: int = 0
    iteration_cap_hit: bool = False

    def to_dict(self) -> dict:
        return {
            "dropped_class": self.dropped_class,
            "dropped_score": self.dropped_score,
            "dropped_ray": self.dropped_ray,
            "dropped_radius": self.dropped_radius,
            "single_view_clusters": self.single_view_clusters,
            "iteration_cap_hit": self.iteration_cap_hit,
        }


def detection_anchor_pixel(det: Detection2D, anchor: str = "bottom-center") -> tuple[float, float]:
    box = det.box
    if anchor == "bottom-center":
        return ((box.x_min + box.x_max) / 2.0, box.y_max)
    if anchor == "box-center":
        return box.center
    raise ValueError(f"unknown anchor {anchor!r}")


def detection_ground_point(camera: Camera, det: Detection2D,
                           scene_center: tuple[float, float] = (0.0, 0.0),
                           scene_radius: float = DEFAULT_SCENE_RADIUS,
                           anchor: str = "bottom-center") -> GroundPoint:
    """Cast the detection's anchor pixel (default: bottom-center of the box)
    onto the ground plane.

    Raises RayParallelOrAscending for horizon-or-above anchors and
    OutOfSceneRadius when the point lands implausibly far from the rig.
    """
    pixel = detection_anchor_pixel(det, anchor)
    x, y, _ = cast_ray_to_ground(camera, pixel)
    dist = math.hypot(x - scene_center[0], y - scene_center[1])
    if dist > scene_radius:
        raise OutOfSceneRadius(
            f"ground point {dist:.1f} m from scene center (limit {scene_radius})")
    return GroundPoint(detection=det, point=(x, y))


def _dp_means_objective(points: np.ndarray, assignment: np.ndarray,
                        lam: float) -> float:
    total = 0.0
    for k in np.unique(assignment):
        members = points[assignment == k]
        mu = members.mean(axis=0)
        total += float(((members - mu) ** 2).sum())
    return total + lam ** 2 * len(np.unique(assignment))


def dp_means(points, lam: float, camera_ids=None,
             max_iterations: int = _MAX_ITERATIONS) -> list[int]:
    """DP-means clustering with an optional one-point-per-camera constraint.

    Locally minimizes sum ||p - mu||^2 + lambda^2 * k. Starts from a single
    cluster at the global mean; each pass reassigns points in input order,
    opening a new cluster when every (unblocked) mean is farther than
    lambda. Means are recomputed after each pass. Stops when assignments
    stabilize, the objective would increase (constrained reassignment can
    do that; the previous assignment is kept), or after `max_iterations`.

    Returns a cluster index per point (contiguous, relabeled by first use).
    """
    labels, _, _ = _dp_means_impl(points, lam, camera_ids, max_iterations)
    return labels


def _dp_means_impl(points, lam: float, camera_ids=None,
                   max_iterations: int = _MAX_ITERATIONS
                   ) -> tuple[list[int], bool, list[float]]:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("dp_means needs at least one point")
    if camera_ids is not None and len(camera_ids) != n:
        raise ValueError("camera_ids must match points")

    lam_sq = lam * lam
    means = [pts.mean(axis=0)]
    assignment = np.zeros(n, dtype=int)
    # Descent is measured across assignment passes. The seeding cluster is
    # only a virtual start: under the camera constraint it can be
    # infeasible (duplicate cameras), so it is excluded from the guard.
    prev_objective = math.inf
    trace: list[float] = []
    capped = False

    for _ in range(max_iterations):
        new_assignment = np.empty(n, dtype=int)
        cluster_cameras: list[set] = [set() for _ in means]
        for i in range(n):
            dists_sq = np.array([((pts[i] - mu) ** 2).sum() for mu in means])
            order = np.argsort(dists_sq, kind="stable")
            chosen = -1
            for k in order:
                if dists_sq[k] > lam_sq:
                    break
                if camera_ids is not None and camera_ids[i] in cluster_cameras[k]:
                    continue
                chosen = int(k)
                break
            if chosen < 0:
                means.append(pts[i].copy())
                cluster_cameras.append(set())
                chosen = len(means) - 1
            new_assignment[i] = chosen
            if camera_ids is not None:
                cluster_cameras[chosen].add(camera_ids[i])

        # Drop empty clusters and recompute means.
        used = sorted(set(new_assignment.tolist()))
        relabel = {old: new for new, old in enumerate(used)}
        new_assignment = np.array([relabel[a] for a in new_assignment])
        means = [pts[new_assignment == k].mean(axis=0) for k in range(len(used))]

        objective = _dp_means_objective(pts, new_assignment, lam)
        if objective > prev_objective + 1e-9:
            break                       # keep the previous, better assignment
        converged = np.array_equal(new_assignment, assignment)
        assignment = new_assignment
        prev_objective = objective
        trace.append(objective)
        if converged:
            break
    else:
        capped = True
        logger.warning("dp_means hit the %d-iteration cap", max_iterations)

    # Relabel by first appearance so output is order-canonical.
    relabel, out = {}, []
    for a in assignment:
        if a not in relabel:
            relabel[a] = len(relabel)
        out.append(relabel[a])
    return out, capped, trace


def build_annotations(cameras: dict[str, Camera],
                      detections: list[Detection2D],
                      lam: float,
                      min_views: int = DEFAULT_MIN_VIEWS,
                      min_score: float = DEFAULT_MIN_SCORE,
                      scene_radius: float = DEFAULT_SCENE_RADIUS,
                      anchor: str = "bottom-center",
                      classes: tuple[str, ...] = ASSOCIATED_CLASSES,
                      ) -> tuple[list[MultiViewAnnotation], AssociationDiagnostics]:
    """Cluster one frame's detections into multi-view vehicle annotations.

    Detections failing the class filter, score threshold, or ground-point
    cast are dropped and counted in the diagnostics. Clusters with fewer
    than `min_views` members are returned too (callers exclude them from
    the loss) and counted as single-view.
    """
    diags = AssociationDiagnostics()
    if not detections:
        return [], diags
    frames = {d.frame for d in detections}
    if len(frames) != 1:
        raise ValueError("build_annotations expects detections from one frame")
    frame = frames.pop()

    rig_centers = np.array([cam.extrinsics.center[:2] for cam in cameras.values()])
    scene_center = tuple(rig_centers.mean(axis=0))

    ground_points: list[GroundPoint] = []
    for det in detections:
        if det.label not in classes:
            diags.dropped_class += 1
            continue
        if det.score < min_score:
            diags.dropped_score += 1
            continue
        try:
            gp = detection_ground_point(
                cameras[det.camera_id], det,
                scene_center=scene_center, scene_radius=scene_radius,
                anchor=anchor)
        except RayParallelOrAscending:
            diags.dropped_ray += 1
            logger.warning("dropped detection on %s: ray misses ground", det.camera_id)
            continue
        except OutOfSceneRadius:
            diags.dropped_radius += 1
            logger.warning("dropped detection on %s: outside scene radius", det.camera_id)
            continue
        ground_points.append(gp)

    if not ground_points:
        return [], diags

    pts = [gp.point for gp in ground_points]
    cam_ids = [gp.detection.camera_id for gp in ground_points]
    assignment, diags.iteration_cap_hit, _ = _dp_means_impl(pts, lam, camera_ids=cam_ids)

    annotations = []
    for k in sorted(set(assignment)):
        members = {}
        member_points = []
        for gp, a in zip(ground_points, assignment):
            if a == k:
                members[gp.detection.camera_id] = gp.detection
                member_points.append(gp.point)
        centroid = tuple(np.mean(member_points, axis=0))
        if len(members) < min_views:
            diags.single_view_clusters += 1
        annotations.append(MultiViewAnnotation(
            cluster_id=k, frame=frame, members=members, centroid=centroid))
    return annotations, diags
