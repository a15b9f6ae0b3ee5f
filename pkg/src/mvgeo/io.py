"""JSON wire formats shared by the CLI, the annotation service, and
external 2D detectors.

All floats are rounded to 9 significant digits before writing, so outputs
are byte-identical across runs for identical inputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .association import Detection2D, MultiViewAnnotation
from .box3d import Box2D, Pose7DoF
from .camera import Camera, CameraExtrinsics, CameraIntrinsics, GroundHomography
from .metrics import EvaluatedPose
from .simulator import RenderedScene, Scene, SceneFrame, SceneVehicle
from .sync import FrameOffsetMap, LightTimeline


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return obj
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dump_json(data: Any, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_round_floats(data), fh, indent=2)
        fh.write("\n")


def load_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- calibration

def camera_to_dict(camera: Camera, homography: GroundHomography | None = None) -> dict:
    intr = camera.intrinsics
    extr = camera.extrinsics
    out = {
        "id": camera.id,
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
        "rotation": [float(v) for v in extr.rotation.reshape(-1)],
        "translation": [float(v) for v in extr.translation],
    }
    if homography is not None:
        out["homography"] = [float(v) for v in homography.h.reshape(-1)]
    return out


def camera_from_dict(data: dict) -> Camera:
    import numpy as np

    intrinsics = CameraIntrinsics(
        fx=float(data["fx"]), fy=float(data["fy"]),
        cx=float(data["cx"]), cy=float(data["cy"]),
        width=int(data["width"]), height=int(data["height"]))
    rotation = np.asarray([float(v) for v in data["rotation"]]).reshape(3, 3)
    # Serialized matrices are rounded to 9 significant digits, which can
    # push them just past the strict orthonormality tolerance; snap back.
    defect = np.abs(rotation @ rotation.T - np.eye(3)).max()
    if defect > 1e-9:
        if defect > 1e-6:
            raise ValueError(f"camera {data['id']!r} rotation is not orthonormal")
        u, _, vt = np.linalg.svd(rotation)
        rotation = u @ vt
        if np.linalg.det(rotation) < 0:
            rotation = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    extrinsics = CameraExtrinsics(
        rotation=rotation,
        translation=[float(v) for v in data["translation"]])
    return Camera(id=str(data["id"]), intrinsics=intrinsics, extrinsics=extrinsics)


def calibration_to_dict(cameras: dict[str, Camera],
                        include_homography: bool = False) -> dict:
    entries = []
    for cam_id in sorted(cameras):
        homography = None
        if include_homography:
            from .camera import homography_from_camera

            try:
                homography = homography_from_camera(cameras[cam_id])
            except Exception:
                homography = None       # degenerate ground view; omit
        entries.append(camera_to_dict(cameras[cam_id], homography))
    return {"cameras": entries}


def calibration_from_dict(data: dict) -> dict[str, Camera]:
    cameras = {}
    for entry in data["cameras"]:
        camera = camera_from_dict(entry)
        if camera.id in cameras:
            raise ValueError(f"duplicate camera id {camera.id!r}")
        cameras[camera.id] = camera
    return cameras


# ---------------------------------------------------------------------- poses

def pose_to_dict(item: EvaluatedPose) -> dict:
    pose = item.pose
    out = {"id": item.vehicle_id,
           "x": pose.x, "y": pose.y, "z": pose.z,
           "l": pose.l, "w": pose.w, "h": pose.h, "yaw": pose.yaw}
    if item.visibility is not None:
        out["visibility"] = item.visibility
    if item.score is not None:
        out["score"] = item.score
    return out


def pose_from_dict(data: dict) -> EvaluatedPose:
    pose = Pose7DoF(x=float(data["x"]), y=float(data["y"]), z=float(data["z"]),
                    l=float(data["l"]), w=float(data["w"]), h=float(data["h"]),
                    yaw=float(data["yaw"]))
    return EvaluatedPose(
        pose=pose,
        vehicle_id=str(data.get("id", "")),
        visibility=float(data["visibility"]) if "visibility" in data else None,
        score=float(data["score"]) if "score" in data else None)


def pose_frames_to_dict(frames: dict[int, list[EvaluatedPose]]) -> dict:
    return {"frames": [
        {"frame": frame, "vehicles": [pose_to_dict(v) for v in vehicles]}
        for frame, vehicles in sorted(frames.items())]}


def pose_frames_from_dict(data: dict) -> dict[int, list[EvaluatedPose]]:
    if "frames" in data:
        entries = data["frames"]
    else:                       # single-frame file
        entries = [data]
    return {int(e["frame"]): [pose_from_dict(v) for v in e["vehicles"]]
            for e in entries}


# ----------------------------------------------------------------- detections

def detection_to_dict(det: Detection2D, vehicle_id: str | None = None) -> dict:
    out = {
        "camera_id": det.camera_id,
        "box": [det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max],
        "score": det.score,
        "class": det.label,
    }
    if vehicle_id is not None:
        out["vehicle_id"] = vehicle_id
    return out


def detection_from_dict(data: dict, frame: int) -> Detection2D:
    box = data["box"]
    return Detection2D(
        camera_id=str(data["camera_id"]), frame=frame,
        box=Box2D(x_min=float(box[0]), y_min=float(box[1]),
                  x_max=float(box[2]), y_max=float(box[3])),
        score=float(data["score"]), label=str(data.get("class", "car")))


def detections_to_dict(frames: dict[int, list[Detection2D]],
                       truth: dict[int, list[str]] | None = None) -> dict:
    out_frames = []
    for frame in sorted(frames):
        ids = truth.get(frame) if truth else None
        out_frames.append({
            "frame": frame,
            "detections": [
                detection_to_dict(d, ids[i] if ids else None)
                for i, d in enumerate(frames[frame])],
        })
    return {"frames": out_frames}


def detections_from_dict(data: dict) -> dict[int, list[Detection2D]]:
    return {
        int(entry["frame"]): [
            detection_from_dict(d, int(entry["frame"]))
            for d in entry["detections"]]
        for entry in data["frames"]}


# ---------------------------------------------------------------- annotations

def annotation_to_dict(ann: MultiViewAnnotation) -> dict:
    return {
        "cluster_id": ann.cluster_id,
        "frame": ann.frame,
        "centroid": [ann.centroid[0], ann.centroid[1]],
        "members": {
            cam_id: detection_to_dict(det)
            for cam_id, det in sorted(ann.members.items())},
    }


def annotation_from_dict(data: dict) -> MultiViewAnnotation:
    frame = int(data["frame"])
    members = {cam_id: detection_from_dict(d, frame)
               for cam_id, d in data["members"].items()}
    return MultiViewAnnotation(
        cluster_id=int(data["cluster_id"]), frame=frame, members=members,
        centroid=(float(data["centroid"][0]), float(data["centroid"][1])))


# ------------------------------------------------------------------ timelines

def timelines_to_dict(timelines: list[LightTimeline], fps: float) -> dict:
    return {"fps": fps, "cameras": [
        {"camera_id": t.camera_id,
         "states": [[frame, state] for frame, state in t.states]}
        for t in timelines]}


def timelines_from_dict(data: dict) -> list[LightTimeline]:
    return [LightTimeline(
        camera_id=str(entry["camera_id"]),
        states=tuple((int(f), str(s)) for f, s in entry["states"]))
        for entry in data["cameras"]]


def offsets_to_dict(offsets: FrameOffsetMap,
                    residuals: dict[str, float | None]) -> dict:
    return {"reference": offsets.reference,
            "offsets": {k: offsets.offsets[k] for k in sorted(offsets.offsets)},
            "residuals": {k: residuals[k] for k in sorted(residuals)}}


# --------------------------------------------------------------- scene bundle

def scene_to_dict(rendered: RenderedScene) -> dict:
    scene = rendered.scene
    gt_frames = []
    for frame in scene.frames:
        vehicles = []
        for v in frame.vehicles:
            item = EvaluatedPose(pose=v.pose, vehicle_id=v.vehicle_id,
                                 visibility=v.visibility)
            vehicles.append(pose_to_dict(item))
        gt_frames.append({"frame": frame.frame, "vehicles": vehicles})
    return {
        "fps": scene.fps,
        "seed": scene.seed,
        "calibration": calibration_to_dict(scene.cameras, include_homography=True),
        "gt_frames": gt_frames,
        "detections": detections_to_dict(rendered.detections, rendered.truth),
        "timelines": timelines_to_dict(rendered.timelines, scene.fps),
        "injected_offsets": {
            k: rendered.injected_offsets[k]
            for k in sorted(rendered.injected_offsets)},
    }


def scene_from_dict(data: dict) -> RenderedScene:
    cameras = calibration_from_dict(data["calibration"])
    frames = []
    for entry in data["gt_frames"]:
        vehicles = []
        for v in entry["vehicles"]:
            item = pose_from_dict(v)
            vehicles.append(SceneVehicle(vehicle_id=item.vehicle_id,
                                         pose=item.pose,
                                         visibility=item.visibility))
        frames.append(SceneFrame(frame=int(entry["frame"]), vehicles=vehicles))
    scene = Scene(cameras=cameras, frames=frames,
                  fps=float(data["fps"]), seed=data.get("seed"))
    detections = detections_from_dict(data["detections"])
    truth = {
        int(entry["frame"]): [str(d.get("vehicle_id", "")) for d in entry["detections"]]
        for entry in data["detections"]["frames"]}
    timelines = timelines_from_dict(data["timelines"])
    return RenderedScene(scene=scene, detections=detections, truth=truth,
                         timelines=timelines,
                         injected_offsets={
                             str(k): int(v)
                             for k, v in data.get("injected_offsets", {}).items()})


def scene_gt_pose_frames(scene: Scene) -> dict[int, list[EvaluatedPose]]:
    """Ground-truth poses of a scene in the evaluation format."""
    return {
        frame.frame: [
            EvaluatedPose(pose=v.pose, vehicle_id=v.vehicle_id,
                          visibility=v.visibility)
            for v in frame.vehicles]
        for frame in scene.frames}
