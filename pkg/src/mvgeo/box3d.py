"""7DoF box representation, projection to 2D, and overlap measures.

A pose is a gravity-aligned box: center position (x, y, z) with z the
vertical center (bottom face at z - h/2), dimensions (l, w, h), and yaw
about world z. Roll and pitch are zero by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import Camera, project_points, wrap_angle
from .errors import EmptyAfterClamp, ZeroEnclosingArea


@dataclass(frozen=True)
class Pose7DoF:
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.l, self.w, self.h, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("pose fields must be finite")
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def footprint_center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def bev(self) -> "BevRect":
        return BevRect(cx=self.x, cy=self.y, l=self.l, w=self.w, yaw=self.yaw)


@dataclass(frozen=True)
class Box2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("box coordinates must be finite")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("box must have x_min <= x_max and y_min <= y_max")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def size(self) -> tuple[float, float]:
        return (self.x_max - self.x_min, self.y_max - self.y_min)


@dataclass(frozen=True)
class BevRect:
    """Rotated rectangle on the ground plane (a pose's footprint)."""

    cx: float
    cy: float
    l: float
    w: float
    yaw: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise ValueError("footprint dimensions must be positive")

    def corners(self) -> np.ndarray:
        """4x2 corner array, counterclockwise from front-left."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        offsets = np.array([[self.l / 2, self.w / 2],
                            [-self.l / 2, self.w / 2],
                            [-self.l / 2, -self.w / 2],
                            [self.l / 2, -self.w / 2]])
        rot = np.array([[c, -s], [s, c]])
        return offsets @ rot.T + np.array([self.cx, self.cy])


def corners(pose: Pose7DoF) -> np.ndarray:
    """8x3 world-frame corners.

    Ordering: bottom face counterclockwise (viewed from above) starting at
    front-left (+l/2, +w/2), then the top face in the same order.
    """
    bev = pose.bev.corners()
    out = np.empty((8, 3))
    out[:4, :2] = bev
    out[4:, :2] = bev
    out[:4, 2] = pose.z - pose.h / 2.0
    out[4:, 2] = pose.z + pose.h / 2.0
    return out


def project_to_box2d(camera: Camera, pose: Pose7DoF, clamp: bool) -> Box2D:
    """Tight axis-aligned pixel box around the projected 3D box.

    Raises BehindCamera if any corner has camera-frame depth <= 1e-9, and
    EmptyAfterClamp if clamping to the image leaves a zero-area box.
    """
    uv = project_points(camera, corners(pose))
    x_min, y_min = uv.min(axis=0)
    x_max, y_max = uv.max(axis=0)
    if clamp:
        intr = camera.intrinsics
        x_min = min(max(x_min, 0.0), float(intr.width))
        x_max = min(max(x_max, 0.0), float(intr.width))
        y_min = min(max(y_min, 0.0), float(intr.height))
        y_max = min(max(y_max, 0.0), float(intr.height))
        if x_max - x_min <= 0.0 or y_max - y_min <= 0.0:
            raise EmptyAfterClamp("projected box lies outside the image")
    return Box2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def intersection_box2d(a: Box2D, b: Box2D) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of axis-aligned boxes; 0 for degenerate input."""
    inter = intersection_box2d(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou_2d(a: Box2D, b: Box2D) -> float:
    """Generalized IoU: IoU - (|C| - |A u B|) / |C| with C the smallest
    enclosing box. In (-1, 1]; raises ZeroEnclosingArea when C is degenerate."""
    enclosing = (max(a.x_max, b.x_max) - min(a.x_min, b.x_min)) * \
                (max(a.y_max, b.y_max) - min(a.y_min, b.y_min))
    if enclosing <= 0.0:
        raise ZeroEnclosingArea("enclosing box has zero area")
    inter = intersection_box2d(a, b)
    union = a.area + b.area - inter
    iou = inter / union if union > 0.0 else 0.0
    return iou - (enclosing - union) / enclosing


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by a convex clip polygon given
    counterclockwise. Returns the (possibly empty) clipped polygon."""
    output = subject
    n = len(clip)
    for i in range(n):
        if len(output) == 0:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        edge = b - a
        input_pts = output
        output_list = []
        # Inside = left of the directed edge a->b for a CCW clip polygon.
        cross_vals = edge[0] * (input_pts[:, 1] - a[1]) - \
            edge[1] * (input_pts[:, 0] - a[0])
        for j in range(len(input_pts)):
            current, cur_side = input_pts[j], cross_vals[j]
            prev_idx = j - 1
            prev, prev_side = input_pts[prev_idx], cross_vals[prev_idx]
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output_list.append(prev + t * (current - prev))
                output_list.append(current)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output_list.append(prev + t * (current - prev))
        output = np.array(output_list) if output_list else np.empty((0, 2))
    return output


def _shoelace_area(polygon: np.ndarray) -> float:
    if len(polygon) < 3:
        return 0.0
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def footprint_intersection_area(a: BevRect, b: BevRect) -> float:
    return _shoelace_area(_clip_polygon(a.corners(), b.corners()))


def iou_bev(a: Pose7DoF, b: Pose7DoF) -> float:
    """Rotated-rectangle IoU of the two ground-plane footprints."""
    inter = footprint_intersection_area(a.bev, b.bev)
    union = a.l * a.w + b.l * b.w - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_3d(a: Pose7DoF, b: Pose7DoF) -> float:
    """Volumetric IoU: footprint intersection times vertical overlap."""
    inter_bev = footprint_intersection_area(a.bev, b.bev)
    overlap_z = min(a.z + a.h / 2, b.z + b.h / 2) - max(a.z - a.h / 2, b.z - b.h / 2)
    inter = inter_bev * max(0.0, overlap_z)
    union = a.l * a.w * a.h + b.l * b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return inter / union
