"""Synthetic intersection scenes: camera rigs, vehicle trajectories, noisy
2D detections, and traffic-light timelines with injected frame offsets.

Everything is deterministic under the scene seed so generated files are
byte-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .association import Detection2D
from .box3d import Box2D, Pose7DoF, footprint_intersection_area, project_to_box2d
from .camera import Camera, CameraIntrinsics, look_at_camera
from .errors import BehindCamera, EmptyAfterClamp, PlacementFailure
from .sync import GREEN, RED, YELLOW, LightTimeline

_PLACEMENT_ATTEMPTS = 1000
_SCENE_ATTEMPTS = 25

DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)


@dataclass(frozen=True)
class RigSpec:
    """Cameras on poles around the intersection, aimed at its center."""

    camera_count: int = 4
    mount_height: float = 6.0
    radius: float = 14.0
    elevation_range_deg: tuple[float, float] = (15.0, 50.0)
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS

    def __post_init__(self):
        if self.camera_count < 1 or self.mount_height <= 0 or self.radius <= 0:
            raise ValueError("invalid rig geometry")


@dataclass(frozen=True)
class SceneSpec:
    vehicle_count: int = 4
    region_radius: float = 4.5
    # Ring placement draws radii in [region_inner_radius, region_radius]
    # at balanced angles (2*pi*k/n plus a small jitter); disc placement
    # samples the whole disc uniformly.
    placement: str = "disc"
    region_inner_radius: float = 0.0
    ring_angle_jitter_deg: float = 15.0
    min_center_distance: float = 3.0
    length_range: tuple[float, float] = (3.5, 5.5)
    width_range: tuple[float, float] = (1.6, 2.1)
    height_range: tuple[float, float] = (1.4, 2.0)
    frame_count: int = 1
    fps: float = 12.5
    max_speed: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.vehicle_count < 0 or self.frame_count < 1:
            raise ValueError("invalid scene size")
        if self.fps <= 0 or self.max_speed < 0:
            raise ValueError("invalid dynamics")
        if self.placement not in ("disc", "ring"):
            raise ValueError("placement must be 'disc' or 'ring'")
        if not 0.0 <= self.region_inner_radius <= self.region_radius:
            raise ValueError("inner radius must lie inside the region")


@dataclass(frozen=True)
class NoiseSpec:
    pixel_sigma: float = 0.0
    drop_probability: float = 0.0
    occlusion: bool = False
    frame_offsets: dict[str, int] | None = None
    event_jitter: int = 0
    score_range: tuple[float, float] = (0.7, 1.0)

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel sigma must be >= 0")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop probability must be in [0, 1]")


@dataclass(frozen=True)
class LightCycleSpec:
    green_s: float = 20.0
    yellow_s: float = 3.0
    red_s: float = 15.0
    cycles: int = 4


@dataclass
class SceneVehicle:
    vehicle_id: str
    pose: Pose7DoF
    visibility: float | None = None


@dataclass
class SceneFrame:
    frame: int
    vehicles: list[SceneVehicle]


@dataclass
class Scene:
    cameras: dict[str, Camera]
    frames: list[SceneFrame]
    fps: float
    seed: int | None = None


@dataclass
class RenderedScene:
    scene: Scene
    detections: dict[int, list[Detection2D]]
    truth: dict[int, list[str]]          # frame -> vehicle id per detection
    timelines: list[LightTimeline]
    injected_offsets: dict[str, int]


def annotations_from_truth(rendered: RenderedScene, frame: int):
    """Oracle annotations: one cluster per ground-truth vehicle, grouped by
    the renderer's detection-to-vehicle map (not by clustering)."""
    from .association import MultiViewAnnotation, detection_ground_point

    cameras = rendered.scene.cameras
    groups: dict[str, dict] = {}
    for det, vid in zip(rendered.detections[frame], rendered.truth[frame]):
        groups.setdefault(vid, {})[det.camera_id] = det
    annotations = []
    for idx, vid in enumerate(sorted(groups)):
        members = groups[vid]
        points = []
        for cam_id, det in members.items():
            try:
                gp = detection_ground_point(cameras[cam_id], det)
            except Exception:
                continue
            points.append(gp.point)
        centroid = tuple(np.mean(points, axis=0)) if points else (0.0, 0.0)
        annotations.append(MultiViewAnnotation(
            cluster_id=idx, frame=frame, members=members, centroid=centroid))
    return annotations


def elevation_angle_deg(camera: Camera, point) -> float:
    """Angle between the camera-to-point ray and the ground plane."""
    center = camera.extrinsics.center
    dx = point[0] - center[0]
    dy = point[1] - center[1]
    dz = center[2] - float(point[2])
    return math.degrees(math.atan2(dz, math.hypot(dx, dy)))


def build_rig(rig: RigSpec) -> dict[str, Camera]:
    """Evenly spaced cameras on a circle, all aimed at the intersection
    center on the ground."""
    cameras = {}
    for i in range(rig.camera_count):
        angle = 2.0 * math.pi * i / rig.camera_count + math.pi / 4.0
        position = (rig.radius * math.cos(angle),
                    rig.radius * math.sin(angle),
                    rig.mount_height)
        cameras[f"cam{i}"] = look_at_camera(
            f"cam{i}", position, (0.0, 0.0, 0.0), rig.intrinsics)
    return cameras


def _visible_in(camera: Camera, pose: Pose7DoF) -> bool:
    try:
        project_to_box2d(camera, pose, clamp=True)
    except (BehindCamera, EmptyAfterClamp):
        return False
    return True


@dataclass
class _Trajectory:
    dims: tuple[float, float, float]
    x0: float
    y0: float
    yaw0: float
    speed: float
    turn_rate: float

    def pose_at(self, t: float) -> Pose7DoF:
        l, w, h = self.dims
        if abs(self.turn_rate) < 1e-9:
            x = self.x0 + self.speed * t * math.cos(self.yaw0)
            y = self.y0 + self.speed * t * math.sin(self.yaw0)
            yaw = self.yaw0
        else:
            yaw = self.yaw0 + self.turn_rate * t
            r = self.speed / self.turn_rate
            x = self.x0 + r * (math.sin(yaw) - math.sin(self.yaw0))
            y = self.y0 - r * (math.cos(yaw) - math.cos(self.yaw0))
        return Pose7DoF(x=x, y=y, z=h / 2.0, l=l, w=w, h=h, yaw=yaw)


def _trajectory_valid(traj: _Trajectory, others: list[_Trajectory],
                      cameras: dict[str, Camera], rig: RigSpec,
                      spec: SceneSpec) -> bool:
    lo, hi = rig.elevation_range_deg
    dt = 1.0 / spec.fps
    for f in range(spec.frame_count):
        pose = traj.pose_at(f * dt)
        if math.hypot(pose.x, pose.y) > spec.region_radius + spec.max_speed * spec.frame_count * dt:
            return False
        views = sum(_visible_in(cam, pose) for cam in cameras.values())
        if views < 2:
            return False
        for cam in cameras.values():
            elev = elevation_angle_deg(cam, pose.center)
            if not lo <= elev <= hi:
                return False
        for other in others:
            other_pose = other.pose_at(f * dt)
            if math.hypot(pose.x - other_pose.x, pose.y - other_pose.y) \
                    < spec.min_center_distance:
                return False
            if footprint_intersection_area(pose.bev, other_pose.bev) > 0.0:
                return False
    return True


def generate_scene(rig: RigSpec, spec: SceneSpec) -> Scene:
    """Sample a reproducible scene: every vehicle stays visible from at
    least two cameras, inside the rig's elevation envelope, and clear of
    other vehicles for the whole clip.

    Raises PlacementFailure when constraint-satisfying placement fails
    1000 times in a row for some vehicle.
    """
    rng = np.random.default_rng(spec.seed)
    cameras = build_rig(rig)
    trajectories: list[_Trajectory] = []
    # A bad early placement can make later vehicles unplaceable, so restart
    # the whole scene when a vehicle exhausts its per-vehicle attempts.
    for _ in range(_SCENE_ATTEMPTS):
        trajectories = []
        for index in range(spec.vehicle_count):
            placed = False
            for _ in range(_PLACEMENT_ATTEMPTS):
                if spec.placement == "ring":
                    radius = rng.uniform(spec.region_inner_radius,
                                         spec.region_radius)
                    theta = (2.0 * math.pi * index / spec.vehicle_count
                             + math.radians(rng.uniform(
                                 -spec.ring_angle_jitter_deg,
                                 spec.ring_angle_jitter_deg)))
                else:
                    radius = spec.region_radius * math.sqrt(rng.uniform())
                    theta = rng.uniform(0.0, 2.0 * math.pi)
                traj = _Trajectory(
                    dims=(rng.uniform(*spec.length_range),
                          rng.uniform(*spec.width_range),
                          rng.uniform(*spec.height_range)),
                    x0=radius * math.cos(theta),
                    y0=radius * math.sin(theta),
                    yaw0=rng.uniform(-math.pi, math.pi),
                    speed=rng.uniform(0.0, spec.max_speed),
                    turn_rate=(0.0 if rng.uniform() < 0.5
                               else rng.uniform(0.05, 0.3) * (1 if rng.uniform() < 0.5 else -1)))
                if _trajectory_valid(traj, trajectories, cameras, rig, spec):
                    trajectories.append(traj)
                    placed = True
                    break
            if not placed:
                break
        if len(trajectories) == spec.vehicle_count:
            break
    else:
        raise PlacementFailure(
            f"could not place {spec.vehicle_count} vehicles after "
            f"{_SCENE_ATTEMPTS} scene attempts x {_PLACEMENT_ATTEMPTS} tries")

    dt = 1.0 / spec.fps
    frames = []
    for f in range(spec.frame_count):
        vehicles = [SceneVehicle(vehicle_id=f"v{i}", pose=traj.pose_at(f * dt))
                    for i, traj in enumerate(trajectories)]
        frames.append(SceneFrame(frame=f, vehicles=vehicles))
    return Scene(cameras=cameras, frames=frames, fps=spec.fps, seed=spec.seed)


def _clip_box_to(target: Box2D, box: Box2D) -> Box2D | None:
    x_min = max(target.x_min, box.x_min)
    y_min = max(target.y_min, box.y_min)
    x_max = min(target.x_max, box.x_max)
    y_max = min(target.y_max, box.y_max)
    if x_max <= x_min or y_max <= y_min:
        return None
    return Box2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def _visible_region(target: Box2D, occluders: list[Box2D]
                    ) -> tuple[float, Box2D | None]:
    """Exact uncovered area and its bounding box, by coordinate compression
    against the occluder edges."""
    clipped = [c for c in (_clip_box_to(target, o) for o in occluders) if c]
    if not clipped:
        return target.area, target
    xs = sorted({target.x_min, target.x_max,
                 *(c.x_min for c in clipped), *(c.x_max for c in clipped)})
    ys = sorted({target.y_min, target.y_max,
                 *(c.y_min for c in clipped), *(c.y_max for c in clipped)})
    area = 0.0
    bx_min = by_min = math.inf
    bx_max = by_max = -math.inf
    for x0, x1 in zip(xs, xs[1:]):
        mx = (x0 + x1) / 2.0
        for y0, y1 in zip(ys, ys[1:]):
            my = (y0 + y1) / 2.0
            covered = any(c.x_min <= mx <= c.x_max and c.y_min <= my <= c.y_max
                          for c in clipped)
            if not covered:
                area += (x1 - x0) * (y1 - y0)
                bx_min, by_min = min(bx_min, x0), min(by_min, y0)
                bx_max, by_max = max(bx_max, x1), max(by_max, y1)
    if area <= 0.0:
        return 0.0, None
    return area, Box2D(x_min=bx_min, y_min=by_min, x_max=bx_max, y_max=by_max)


def _render_camera_frame(camera: Camera, vehicles: list[SceneVehicle],
                         frame: int, noise: NoiseSpec, rng
                         ) -> tuple[list[Detection2D], list[str], dict[str, float]]:
    """Detections for one camera at one frame plus per-vehicle visibility."""
    projected = []
    for vehicle in vehicles:
        try:
            unclamped = project_to_box2d(camera, vehicle.pose, clamp=False)
            clamped = project_to_box2d(camera, vehicle.pose, clamp=True)
        except (BehindCamera, EmptyAfterClamp):
            continue
        cam_pos = camera.extrinsics.rotation @ vehicle.pose.center \
            + camera.extrinsics.translation
        projected.append((cam_pos[2], vehicle, unclamped, clamped))
    projected.sort(key=lambda item: item[0])

    detections: list[Detection2D] = []
    truth: list[str] = []
    visibility: dict[str, float] = {}
    for idx, (_, vehicle, unclamped, clamped) in enumerate(projected):
        occluders = [p[3] for p in projected[:idx]]
        if noise.occlusion:
            visible_area, visible_box = _visible_region(clamped, occluders)
        else:
            visible_area, visible_box = clamped.area, clamped
        visibility[vehicle.vehicle_id] = visible_area / unclamped.area \
            if unclamped.area > 0 else 0.0
        if visible_box is None:
            continue
        if noise.drop_probability > 0 and rng.uniform() < noise.drop_probability:
            continue
        box = visible_box
        if noise.pixel_sigma > 0:
            edges = np.array([box.x_min, box.y_min, box.x_max, box.y_max])
            edges = edges + rng.normal(0.0, noise.pixel_sigma, size=4)
            intr = camera.intrinsics
            x_lo, x_hi = sorted((edges[0], edges[2]))
            y_lo, y_hi = sorted((edges[1], edges[3]))
            box = Box2D(
                x_min=min(max(x_lo, 0.0), intr.width),
                y_min=min(max(y_lo, 0.0), intr.height),
                x_max=min(max(x_hi, 0.0), intr.width),
                y_max=min(max(y_hi, 0.0), intr.height))
            if box.area <= 0.0:
                continue
        score = rng.uniform(*noise.score_range)
        detections.append(Detection2D(camera_id=camera.id, frame=frame,
                                      box=box, score=float(score), label="car"))
        truth.append(vehicle.vehicle_id)
    return detections, truth, visibility


def _light_timelines(cameras: dict[str, Camera], fps: float,
                     light: LightCycleSpec, noise: NoiseSpec, rng
                     ) -> tuple[list[LightTimeline], dict[str, int]]:
    durations = ((GREEN, light.green_s), (YELLOW, light.yellow_s), (RED, light.red_s))
    changes = []          # (frame, state) in the reference clock
    frame = 0
    for _ in range(light.cycles):
        for state, seconds in durations:
            changes.append((frame, state))
            frame += max(1, int(round(seconds * fps)))
    offsets = dict(noise.frame_offsets or {})
    timelines = []
    for cam_id in cameras:
        offset = offsets.setdefault(cam_id, 0)
        states = []
        for f, state in changes:
            jitter = int(rng.integers(-noise.event_jitter, noise.event_jitter + 1)) \
                if noise.event_jitter > 0 else 0
            states.append((max(0, f + offset + jitter), state))
        # Jitter can reorder adjacent changes; keep frames strictly increasing.
        cleaned = [states[0]]
        for f, state in states[1:]:
            if f <= cleaned[-1][0]:
                f = cleaned[-1][0] + 1
            cleaned.append((f, state))
        timelines.append(LightTimeline(camera_id=cam_id, states=tuple(cleaned)))
    return timelines, offsets


def render_detections(scene: Scene, noise: NoiseSpec = NoiseSpec(),
                      light: LightCycleSpec = LightCycleSpec(),
                      ) -> RenderedScene:
    """Render noisy 2D detections and light timelines from ground truth.

    With zero noise the detection boxes equal the clamped tight projections
    exactly. Occlusion (when enabled) truncates boxes against nearer
    vehicles' silhouettes and can drop fully hidden vehicles. Per-vehicle
    visibility (mean over cameras of the visible box-area fraction) is
    recorded on the returned scene's ground truth.
    """
    rng = np.random.default_rng((scene.seed or 0) + 1)
    detections: dict[int, list[Detection2D]] = {}
    truth: dict[int, list[str]] = {}
    out_frames = []
    for scene_frame in scene.frames:
        frame_dets: list[Detection2D] = []
        frame_truth: list[str] = []
        per_camera_vis: dict[str, list[float]] = {
            v.vehicle_id: [] for v in scene_frame.vehicles}
        for cam_id in sorted(scene.cameras):
            dets, det_truth, vis = _render_camera_frame(
                scene.cameras[cam_id], scene_frame.vehicles,
                scene_frame.frame, noise, rng)
            frame_dets.extend(dets)
            frame_truth.extend(det_truth)
            for vehicle in scene_frame.vehicles:
                per_camera_vis[vehicle.vehicle_id].append(
                    vis.get(vehicle.vehicle_id, 0.0))
        detections[scene_frame.frame] = frame_dets
        truth[scene_frame.frame] = frame_truth
        out_frames.append(SceneFrame(
            frame=scene_frame.frame,
            vehicles=[SceneVehicle(
                vehicle_id=v.vehicle_id, pose=v.pose,
                visibility=float(np.mean(per_camera_vis[v.vehicle_id])))
                for v in scene_frame.vehicles]))
    timelines, offsets = _light_timelines(
        scene.cameras, scene.fps, light, noise, rng)
    rendered_scene = Scene(cameras=scene.cameras, frames=out_frames,
                           fps=scene.fps, seed=scene.seed)
    return RenderedScene(scene=rendered_scene, detections=detections,
                         truth=truth, timelines=timelines,
                         injected_offsets=offsets)
