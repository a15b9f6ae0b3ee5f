"""HTTP backend for the multi-view labelling tool.

Serves calibration, frame indices, detections, and images (when present);
computes live box reprojections; persists hand annotations one JSON file
per frame with monotonically increasing revisions. Single-operator tool:
no auth, binds to localhost by default.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, field_validator

from . import io as mvio
from .box3d import Pose7DoF, corners, project_to_box2d
from .camera import Camera, cast_ray_to_ground, project_points
from .errors import BehindCamera, EmptyAfterClamp, RayParallelOrAscending

VISIBILITY_LEVELS = ("full", "partial", "none")
_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class PoseModel(BaseModel):
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float

    @field_validator("l", "w", "h")
    @classmethod
    def _positive(cls, value, info):
        if not math.isfinite(value) or value <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("x", "y", "z", "yaw")
    @classmethod
    def _finite(cls, value, info):
        if not math.isfinite(value):
            raise ValueError(f"{info.field_name} must be finite")
        return value

    def to_pose(self) -> Pose7DoF:
        return Pose7DoF(x=self.x, y=self.y, z=self.z,
                        l=self.l, w=self.w, h=self.h, yaw=self.yaw)


class AnnotationModel(BaseModel):
    vehicle_id: str
    pose: PoseModel
    visibility: dict[str, str]
    note: str = ""
    timestamp: str = ""

    @field_validator("visibility")
    @classmethod
    def _levels(cls, value):
        for cam, level in value.items():
            if level not in VISIBILITY_LEVELS:
                raise ValueError(
                    f"visibility[{cam}] must be one of {VISIBILITY_LEVELS}")
        return value


class PutAnnotationRequest(BaseModel):
    annotation: AnnotationModel
    base_revision: int | None = None


class CastRequest(BaseModel):
    camera_id: str
    u: float
    v: float


class FrameStore:
    """One JSON file per frame; writes serialize per frame and go through
    a temp file + atomic rename."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[int, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, frame: int) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(frame, threading.Lock())

    def _path(self, frame: int) -> Path:
        return self.root / f"frame_{frame}.json"

    def load(self, frame: int) -> dict:
        path = self._path(frame)
        if not path.exists():
            return {"revision": 0, "annotations": []}
        with open(path) as fh:
            return json.load(fh)

    def upsert(self, frame: int, record: dict, base_revision: int | None) -> dict:
        with self._lock(frame):
            data = self.load(frame)
            if base_revision is not None and base_revision != data["revision"]:
                raise HTTPException(
                    status_code=409,
                    detail={"revision": data["revision"],
                            "message": "revision mismatch; reload the frame"})
            records = [a for a in data["annotations"]
                       if a["vehicle_id"] != record["vehicle_id"]]
            records.append(record)
            records.sort(key=lambda a: a["vehicle_id"])
            data = {"revision": data["revision"] + 1, "annotations": records}
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            try:
                with os.fdopen(fd, "w") as fh:
                    json.dump(data, fh, indent=2)
                    fh.write("\n")
                os.replace(tmp, self._path(frame))
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            return data


class ServiceData:
    """Everything the endpoints need, loaded once from the data directory.

    Two layouts are accepted: a simulator scene bundle `scene.json`
    (image-free mode), or `calibration.json` plus optional
    `detections.json` and an `images/{frame}/{camera}.jpg` tree.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        scene_path = self.data_dir / "scene.json"
        calib_path = self.data_dir / "calibration.json"
        if scene_path.exists():
            rendered = mvio.scene_from_dict(mvio.load_json(scene_path))
            self.cameras = rendered.scene.cameras
            self.detections = rendered.detections
            self.frames = sorted(f.frame for f in rendered.scene.frames)
        elif calib_path.exists():
            self.cameras = mvio.calibration_from_dict(mvio.load_json(calib_path))
            det_path = self.data_dir / "detections.json"
            self.detections = (mvio.detections_from_dict(mvio.load_json(det_path))
                               if det_path.exists() else {})
            self.frames = sorted(self.detections) or self._frames_from_images()
        else:
            raise FileNotFoundError(
                f"{data_dir} has neither scene.json nor calibration.json")
        self.store = FrameStore(self.data_dir / "annotations")

    def _frames_from_images(self) -> list[int]:
        images = self.data_dir / "images"
        if not images.is_dir():
            return []
        return sorted(int(p.name) for p in images.iterdir()
                      if p.is_dir() and p.name.isdigit())

    def image_path(self, frame: int, camera_id: str) -> Path | None:
        base = self.data_dir / "images" / str(frame)
        for suffix in _IMAGE_SUFFIXES:
            path = base / f"{camera_id}{suffix}"
            if path.exists():
                return path
        return None


def _project_response(cameras: dict[str, Camera], pose: Pose7DoF) -> dict:
    pts = corners(pose)
    out = {}
    for cam_id in sorted(cameras):
        camera = cameras[cam_id]
        try:
            uv = project_points(camera, pts)
        except BehindCamera:
            out[cam_id] = {"behind_camera": True, "corners": None, "box": None}
            continue
        entry = {"behind_camera": False,
                 "corners": [[float(u), float(v)] for u, v in uv]}
        try:
            box = project_to_box2d(camera, pose, clamp=True)
            entry["box"] = [box.x_min, box.y_min, box.x_max, box.y_max]
        except EmptyAfterClamp:
            entry["box"] = None
        out[cam_id] = entry
    return out


def create_app(data_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    data = ServiceData(data_dir)
    app = FastAPI(title="mvgeo annotation service")

    if ui_dir is not None and Path(ui_dir, "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def camera_or_404(camera_id: str) -> Camera:
        camera = data.cameras.get(camera_id)
        if camera is None:
            raise HTTPException(status_code=404, detail=f"unknown camera {camera_id}")
        return camera

    def check_frame(frame: int) -> None:
        if data.frames and frame not in data.frames:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame}")

    @app.get("/calib")
    def get_calib():
        return mvio.calibration_to_dict(data.cameras)

    @app.get("/frames")
    def get_frames():
        return {"frames": data.frames,
                "cameras": sorted(data.cameras),
                "images_available": (data.data_dir / "images").is_dir()}

    @app.get("/frames/{frame}/images/{camera_id}")
    def get_image(frame: int, camera_id: str):
        check_frame(frame)
        camera_or_404(camera_id)
        path = data.image_path(frame, camera_id)
        if path is None:
            raise HTTPException(status_code=404,
                                detail="no image for this frame/camera")
        return FileResponse(path)

    @app.get("/frames/{frame}/detections")
    def get_detections(frame: int):
        check_frame(frame)
        dets = data.detections.get(frame, [])
        return {"frame": frame,
                "detections": [mvio.detection_to_dict(d) for d in dets]}

    @app.post("/project")
    def project(pose: PoseModel):
        return _project_response(data.cameras, pose.to_pose())

    @app.post("/cast")
    def cast(request: CastRequest):
        camera = camera_or_404(request.camera_id)
        try:
            x, y, z = cast_ray_to_ground(camera, (request.u, request.v))
        except RayParallelOrAscending as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"x": x, "y": y, "z": z}

    @app.get("/frames/{frame}/annotations")
    def get_annotations(frame: int):
        check_frame(frame)
        return data.store.load(frame)

    @app.put("/frames/{frame}/annotations")
    def put_annotation(frame: int, request: PutAnnotationRequest):
        check_frame(frame)
        missing = [cam for cam in sorted(data.cameras)
                   if cam not in request.annotation.visibility]
        if missing:
            raise HTTPException(
                status_code=422,
                detail=f"visibility missing for cameras: {missing}")
        record = {"frame": frame, **request.annotation.model_dump()}
        stored = data.store.upsert(frame, record, request.base_revision)
        return JSONResponse({"revision": stored["revision"], "annotation": record})

    return app
