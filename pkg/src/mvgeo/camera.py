"""Pinhole camera model, ground-plane ray casting, and calibration solvers.

Coordinate conventions used throughout the toolkit:

World frame (right-handed):
  - z up, ground plane is z = 0, units are meters.
  - Yaw is a rotation about world z, measured from world +x,
    counterclockwise positive, stored in (-pi, pi].

Camera frame (right-handed, standard computer vision):
  - x right, y down, z forward along the optical axis.
  - A world point X maps to camera coordinates via X_c = R @ X + t,
    with R the world->camera rotation and t in the camera frame.
  - The camera center in world coordinates is C = -R.T @ t.

Image frame:
  - Origin top-left, u right, v down, units pixels.
  - u = fx * (x_c / z_c) + cx,  v = fy * (y_c / z_c) + cy.

Lens distortion is not modeled; inputs are assumed distortion-corrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation as ScipyRotation

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    NoConvergence,
    RayParallelOrAscending,
)

_ROTATION_TOL = 1e-9
_MIN_DEPTH = 1e-9


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus the image size they refer to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (isinstance(self.width, int) and isinstance(self.height, int)
                and self.width > 0 and self.height > 0):
            raise ValueError("width and height must be positive integers")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraExtrinsics:
    """World->camera rigid transform: X_c = rotation @ X_w + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ValueError("extrinsics must be finite")
        if np.abs(rot @ rot.T - np.eye(3)).max() > _ROTATION_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ROTATION_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, C = -R.T @ t."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class Camera:
    id: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics

    @property
    def heading(self) -> float:
        """Ground-plane heading of the optical axis (world yaw of +z_cam)."""
        forward = self.extrinsics.rotation.T @ np.array([0.0, 0.0, 1.0])
        return math.atan2(forward[1], forward[0])


@dataclass(frozen=True)
class GroundHomography:
    """3x3 map from homogeneous image pixels to ground-plane points (z=0)."""

    h: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.h, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(mat)) <= 1e-12:
            raise ValueError("homography must be invertible")
        if abs(mat[2, 2]) < 1e-12:
            raise ValueError("homography cannot be normalized (h[2][2] ~ 0)")
        mat = mat / mat[2, 2]
        mat.flags.writeable = False
        object.__setattr__(self, "h", mat)

    def pixel_to_ground(self, pixel) -> tuple[float, float]:
        u, v = float(pixel[0]), float(pixel[1])
        p = self.h @ np.array([u, v, 1.0])
        if abs(p[2]) < 1e-15:
            raise RayParallelOrAscending(f"pixel ({u}, {v}) maps to infinity")
        return (p[0] / p[2], p[1] / p[2])


@dataclass(frozen=True)
class PointCorrespondence:
    """A measured pixel <-> world point pair used by the calibration solvers."""

    pixel: tuple[float, float]
    world: tuple[float, float, float]

    def __post_init__(self):
        vals = (*self.pixel, *self.world)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("correspondence coordinates must be finite")


def project_point(camera: Camera, world_point) -> tuple[float, float]:
    """Project a world point to pixel coordinates.

    Raises BehindCamera when the camera-frame depth is <= 1e-9. The result
    may lie outside the image bounds.
    """
    x_c = camera.extrinsics.rotation @ np.asarray(world_point, dtype=float) \
        + camera.extrinsics.translation
    if x_c[2] <= _MIN_DEPTH:
        raise BehindCamera(f"point depth {x_c[2]:.3g} <= {_MIN_DEPTH}")
    intr = camera.intrinsics
    u = intr.fx * (x_c[0] / x_c[2]) + intr.cx
    v = intr.fy * (x_c[1] / x_c[2]) + intr.cy
    return (u, v)


def project_points(camera: Camera, world_points: np.ndarray) -> np.ndarray:
    """Vectorized projection of an (n, 3) array; raises BehindCamera if any
    point has depth <= 1e-9."""
    pts = np.asarray(world_points, dtype=float).reshape(-1, 3)
    x_c = pts @ camera.extrinsics.rotation.T + camera.extrinsics.translation
    if np.any(x_c[:, 2] <= _MIN_DEPTH):
        raise BehindCamera("at least one point is behind the camera")
    intr = camera.intrinsics
    uv = np.empty((len(pts), 2))
    uv[:, 0] = intr.fx * (x_c[:, 0] / x_c[:, 2]) + intr.cx
    uv[:, 1] = intr.fy * (x_c[:, 1] / x_c[:, 2]) + intr.cy
    return uv


def cast_ray_to_ground(camera: Camera, pixel) -> tuple[float, float, float]:
    """Intersect the viewing ray of a pixel with the ground plane z = 0.

    Returns C + s*d with s = -C_z / d_z, where C is the camera center and
    d = R.T @ K^-1 @ (u, v, 1). Raises RayParallelOrAscending when the ray
    is parallel to the plane or the intersection lies behind the camera.
    """
    u, v = float(pixel[0]), float(pixel[1])
    intr = camera.intrinsics
    d_cam = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    d = camera.extrinsics.rotation.T @ d_cam
    center = camera.extrinsics.center
    if abs(d[2]) < 1e-12:
        raise RayParallelOrAscending("ray is parallel to the ground plane")
    s = -center[2] / d[2]
    if s <= 0:
        raise RayParallelOrAscending("ray ascends away from the ground plane")
    p = center + s * d
    return (p[0], p[1], 0.0)


def _hartley_normalization(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform taking the centroid to the origin and the mean
    distance to sqrt(2); returns (normalized points, 3x3 transform)."""
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 1e-15 else 1.0
    t = np.array([[scale, 0.0, -scale * centroid[0]],
                  [0.0, scale, -scale * centroid[1]],
                  [0.0, 0.0, 1.0]])
    normalized = (pts - centroid) * scale
    return normalized, t


def solve_homography(correspondences: list[PointCorrespondence]) -> GroundHomography:
    """Least-squares DLT estimate of the pixel -> ground-plane homography.

    All correspondences must have world z = 0 and there must be at least 4.
    Raises DegenerateConfiguration when the DLT system is rank-deficient
    (e.g. collinear points).
    """
    if len(correspondences) < 4:
        raise ValueError("homography estimation needs at least 4 correspondences")
    for c in correspondences:
        if abs(c.world[2]) > 1e-12:
            raise ValueError("homography correspondences must lie on z = 0")

    pixels = np.array([c.pixel for c in correspondences], dtype=float)
    world = np.array([c.world[:2] for c in correspondences], dtype=float)
    px_n, t_px = _hartley_normalization(pixels)
    w_n, t_w = _hartley_normalization(world)

    rows = []
    for (u, v), (x, y) in zip(px_n, w_n):
        rows.append([-u, -v, -1.0, 0.0, 0.0, 0.0, x * u, x * v, x])
        rows.append([0.0, 0.0, 0.0, -u, -v, -1.0, y * u, y * v, y])
    a = np.array(rows)

    _, sv, vt = np.linalg.svd(a)
    if sv[0] <= 0 or sv[-2] / sv[0] < 1e-9:
        raise DegenerateConfiguration("homography DLT system is rank-deficient")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_w) @ h_n @ t_px
    if abs(h[2, 2]) < 1e-12:
        raise DegenerateConfiguration("homography cannot be scale-normalized")
    return GroundHomography(h=h)


def homography_from_camera(camera: Camera) -> GroundHomography:
    """Analytic pixel -> ground homography of a calibrated camera:
    inverse of K @ [r1 r2 t]."""
    r = camera.extrinsics.rotation
    t = camera.extrinsics.translation
    world_to_pixel = camera.intrinsics.k_matrix @ np.column_stack(
        [r[:, 0], r[:, 1], t])
    return GroundHomography(h=np.linalg.inv(world_to_pixel))


def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _points_are_coplanar(world: np.ndarray, tol: float = 1e-6) -> bool:
    centered = world - world.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[-1] < tol * max(sv[0], 1.0)


def _pnp_dlt_init(norm_xy: np.ndarray, world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """DLT over the full [R|t] for non-coplanar points (K already removed)."""
    rows = []
    for (x, y), w in zip(norm_xy, world):
        wx, wy, wz = w
        rows.append([wx, wy, wz, 1, 0, 0, 0, 0, -x * wx, -x * wy, -x * wz, -x])
        rows.append([0, 0, 0, 0, wx, wy, wz, 1, -y * wx, -y * wy, -y * wz, -y])
    a = np.array(rows, dtype=float)
    _, sv, vt = np.linalg.svd(a)
    if sv[0] <= 0 or sv[-2] / sv[0] < 1e-9:
        raise DegenerateConfiguration(
            "PnP DLT system is rank-deficient (points may be coplanar)")
    m = vt[-1].reshape(3, 4)
    # Fix sign so depths are positive, then scale so the rotation part is
    # orthonormal on average.
    depths = world @ m[:, :3].T[:, 2] + m[2, 3]
    if np.sum(depths > 0) < np.sum(depths < 0):
        m = -m
    scale = np.mean(np.linalg.svd(m[:, :3], compute_uv=False))
    m = m / scale
    r = _nearest_rotation(m[:, :3])
    t = m[:, 3]
    return r, t


def _pnp_planar_init(norm_xy: np.ndarray, world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Homography-based initialization for coplanar world points."""
    centroid = world.mean(axis=0)
    centered = world - centroid
    _, _, vt = np.linalg.svd(centered)
    basis = vt[:2]                      # in-plane axes
    plane_xy = centered @ basis.T

    px_n, t_px = _hartley_normalization(norm_xy)
    w_n, t_w = _hartley_normalization(plane_xy)
    rows = []
    for (x, y), (u, v) in zip(w_n, px_n):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    a = np.array(rows)
    _, sv, vt_h = np.linalg.svd(a)
    if sv[0] <= 0 or sv[-2] / sv[0] < 1e-9:
        raise DegenerateConfiguration("planar PnP homography is rank-deficient")
    # Homography maps plane coords -> normalized image coords: g = [r1' r2' t'].
    g = np.linalg.inv(t_px) @ vt_h[-1].reshape(3, 3) @ t_w
    lam = 2.0 / (np.linalg.norm(g[:, 0]) + np.linalg.norm(g[:, 1]))
    g = g * lam
    # Sign: the plane centroid must sit in front of the camera (z > 0).
    if g[2, 2] < 0:
        g = -g
    r1, r2, t_plane = g[:, 0], g[:, 1], g[:, 2]
    r_plane = _nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    # Compose with the world->plane change of coordinates.
    r = r_plane @ np.vstack([basis, np.cross(basis[0], basis[1])])
    t = t_plane - r @ centroid
    return _nearest_rotation(r), t


def _reprojection_residuals(params: np.ndarray, world: np.ndarray,
                            pixels: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = ScipyRotation.from_rotvec(params[:3]).as_matrix()
    cam = world @ r.T + params[3:]
    z = np.where(np.abs(cam[:, 2]) < 1e-12, 1e-12, cam[:, 2])
    u = k[0, 0] * (cam[:, 0] / z) + k[0, 2]
    v = k[1, 1] * (cam[:, 1] / z) + k[1, 2]
    return np.concatenate([u - pixels[:, 0], v - pixels[:, 1]])


def solve_pnp(correspondences: list[PointCorrespondence],
              intrinsics: CameraIntrinsics,
              planar: bool | None = None,
              max_iterations: int = 100) -> CameraExtrinsics:
    """Estimate extrinsics from 2D-3D correspondences and known intrinsics.

    DLT initialization (planar or general, chosen automatically unless
    `planar` is forced) followed by Levenberg-Marquardt refinement of the
    reprojection error. The returned rotation is orthonormal.

    Raises DegenerateConfiguration on rank-deficient input (e.g. coplanar
    points with planar=False) and NoConvergence when refinement exhausts
    its evaluation budget without meeting its convergence criteria.
    """
    n = len(correspondences)
    if n < 4:
        raise ValueError("PnP needs at least 4 correspondences")
    world = np.array([c.world for c in correspondences], dtype=float)
    pixels = np.array([c.pixel for c in correspondences], dtype=float)
    k = intrinsics.k_matrix
    norm_xy = np.column_stack([(pixels[:, 0] - intrinsics.cx) / intrinsics.fx,
                               (pixels[:, 1] - intrinsics.cy) / intrinsics.fy])

    if planar is None:
        planar = _points_are_coplanar(world)
    if planar:
        r0, t0 = _pnp_planar_init(norm_xy, world)
    else:
        if n < 6:
            raise ValueError("general (non-planar) PnP needs at least 6 points")
        r0, t0 = _pnp_dlt_init(norm_xy, world)

    x0 = np.concatenate([ScipyRotation.from_matrix(r0).as_rotvec(), t0])
    result = least_squares(
        _reprojection_residuals, x0, args=(world, pixels, k),
        method="lm", max_nfev=max_iterations * len(x0))
    if result.status == 0:
        raise NoConvergence(
            f"PnP refinement exceeded {max_iterations} iterations")
    r = _nearest_rotation(ScipyRotation.from_rotvec(result.x[:3]).as_matrix())
    return CameraExtrinsics(rotation=r, translation=result.x[3:])


def camera_to_world_pose(camera: Camera, pose_cam):
    """Convert a camera-centric 7DoF pose to the world frame.

    Position is mapped by the rigid inverse X_w = R.T @ (X_c - t); yaw gets
    the camera's ground-plane heading added and is re-wrapped; dimensions
    are unchanged.
    """
    from .box3d import Pose7DoF

    pos_cam = np.array([pose_cam.x, pose_cam.y, pose_cam.z])
    pos_w = camera.extrinsics.rotation.T @ (pos_cam - camera.extrinsics.translation)
    return Pose7DoF(
        x=pos_w[0], y=pos_w[1], z=pos_w[2],
        l=pose_cam.l, w=pose_cam.w, h=pose_cam.h,
        yaw=wrap_angle(pose_cam.yaw + camera.heading))


def world_to_camera_pose(camera: Camera, pose_world):
    """Inverse of camera_to_world_pose."""
    from .box3d import Pose7DoF

    pos_w = np.array([pose_world.x, pose_world.y, pose_world.z])
    pos_c = camera.extrinsics.rotation @ pos_w + camera.extrinsics.translation
    return Pose7DoF(
        x=pos_c[0], y=pos_c[1], z=pos_c[2],
        l=pose_world.l, w=pose_world.w, h=pose_world.h,
        yaw=wrap_angle(pose_world.yaw - camera.heading))


def look_at_camera(cam_id: str, position, target, intrinsics: CameraIntrinsics) -> Camera:
    """Build a camera at `position` whose optical axis points at `target`,
    with image x kept horizontal (world z treated as up)."""
    pos = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - pos
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position and target coincide")
    z_c = forward / norm
    up = np.array([0.0, 0.0, 1.0])
    x_c = np.cross(z_c, up)
    x_norm = np.linalg.norm(x_c)
    if x_norm < 1e-12:          # looking straight up/down: pick any right axis
        x_c = np.array([1.0, 0.0, 0.0])
    else:
        x_c = x_c / x_norm
    y_c = np.cross(z_c, x_c)
    rot = np.vstack([x_c, y_c, z_c])
    rot = _nearest_rotation(rot)
    trans = -rot @ pos
    return Camera(id=cam_id,
                  intrinsics=intrinsics,
                  extrinsics=CameraExtrinsics(rotation=rot, translation=trans))
