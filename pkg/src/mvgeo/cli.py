"""Command-line pipeline: simulate / annotate / sync / refine / eval / serve.

All stages speak the shared JSON formats, are seeded, and write only to
their declared output paths. Exit codes: 0 success, 1 input error,
2 internal error. MVGEO_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io
from .association import build_annotations
from .errors import MvgeoError
from .metrics import BucketSpec, EvaluatedPose, MatchingConfig, evaluate
from .mvloss import match_poses_to_annotations, multi_view_loss
from .refine import NELDER_MEAD, RefineConfig, refine_pose
from .simulator import (
    LightCycleSpec,
    NoiseSpec,
    RigSpec,
    SceneSpec,
    generate_scene,
    render_detections,
)
from .sync import apply_offsets, estimate_offsets, extract_events

logger = logging.getLogger("mvgeo")


def _add_simulate(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="generate a synthetic scene bundle")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--vehicles", type=int, default=4)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=float, default=6.0, help="camera mount height (m)")
    p.add_argument("--radius", type=float, default=14.0, help="camera ring radius (m)")
    p.add_argument("--region", type=float, default=4.5, help="vehicle sampling radius (m)")
    p.add_argument("--separation", type=float, default=7.0,
                   help="min vehicle center distance (m)")
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--occlusion", action="store_true")
    p.add_argument("--offsets", type=str, default="",
                   help="per-camera frame offsets, e.g. 'cam0=0,cam1=3'")
    p.add_argument("--jitter", type=int, default=0, help="light event jitter (frames)")
    p.add_argument("--out", required=True)


def _run_simulate(args) -> int:
    rig = RigSpec(camera_count=args.cameras, mount_height=args.height,
                  radius=args.radius)
    spec = SceneSpec(vehicle_count=args.vehicles, frame_count=args.frames,
                     region_radius=args.region,
                     min_center_distance=args.separation, seed=args.seed)
    offsets = None
    if args.offsets:
        offsets = {}
        for chunk in args.offsets.split(","):
            cam, _, value = chunk.partition("=")
            offsets[cam.strip()] = int(value)
    noise = NoiseSpec(pixel_sigma=args.noise_px, drop_probability=args.drop,
                      occlusion=args.occlusion, frame_offsets=offsets,
                      event_jitter=args.jitter)
    rendered = render_detections(generate_scene(rig, spec), noise,
                                 LightCycleSpec())
    io.dump_json(io.scene_to_dict(rendered), args.out)
    logger.info("wrote scene bundle to %s", args.out)
    return 0


def _add_annotate(subparsers) -> None:
    p = subparsers.add_parser("annotate", help="cluster detections across views")
    p.add_argument("--detections", help="detections JSON file")
    p.add_argument("--calib", help="calibration JSON file")
    p.add_argument("--scene", help="scene bundle (used instead of --detections/--calib)")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--min-views", type=int, default=2)
    p.add_argument("--min-score", type=float, default=0.5)
    p.add_argument("--scene-radius", type=float, default=200.0)
    p.add_argument("--anchor", choices=["bottom-center", "box-center"],
                   default="bottom-center")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)


def _run_annotate(args) -> int:
    if args.scene:
        rendered = io.scene_from_dict(io.load_json(args.scene))
        cameras = rendered.scene.cameras
        detections = rendered.detections
    else:
        if not (args.detections and args.calib):
            raise ValueError("annotate needs --scene or both --detections and --calib")
        cameras = io.calibration_from_dict(io.load_json(args.calib))
        detections = io.detections_from_dict(io.load_json(args.detections))

    def annotate_frame(frame: int):
        annotations, diags = build_annotations(
            cameras, detections[frame], lam=args.lam,
            min_views=args.min_views, min_score=args.min_score,
            scene_radius=args.scene_radius, anchor=args.anchor)
        return frame, annotations, diags

    frames = sorted(detections)
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(annotate_frame, frames))

    out = {"frames": [
        {"frame": frame,
         "annotations": [io.annotation_to_dict(a) for a in annotations],
         "diagnostics": diags.to_dict()}
        for frame, annotations, diags in results]}
    io.dump_json(out, args.out)
    return 0


def _add_sync(subparsers) -> None:
    p = subparsers.add_parser("sync", help="estimate/apply frame offsets")
    p.add_argument("--timelines", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--window", type=int, default=25)
    p.add_argument("--apply", help="detections file to re-index with the offsets")
    p.add_argument("--aligned-out", help="output path for re-indexed detections")
    p.add_argument("--out", required=True)


def _run_sync(args) -> int:
    timelines = io.timelines_from_dict(io.load_json(args.timelines))
    events = {t.camera_id: extract_events(t) for t in timelines}
    offsets, residuals = estimate_offsets(events, args.reference, args.window)
    io.dump_json(io.offsets_to_dict(offsets, residuals), args.out)
    if args.apply:
        if not args.aligned_out:
            raise ValueError("--apply needs --aligned-out")
        detections = io.detections_from_dict(io.load_json(args.apply))
        aligned: dict = {}
        for frame, dets in detections.items():
            for det in dets:
                new_frame = apply_offsets(frame, offsets, det.camera_id)
                if new_frame < 0:
                    continue            # precedes the synchronized start
                aligned.setdefault(new_frame, []).append(
                    io.detection_to_dict(det))
        io.dump_json(
            {"frames": [{"frame": f, "detections": aligned[f]}
                        for f in sorted(aligned)]},
            args.aligned_out)
    return 0


def _add_refine(subparsers) -> None:
    p = subparsers.add_parser("refine", help="refine 7DoF poses against a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--init", required=True, help="initial poses JSON")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--match-distance", type=float, default=4.0)
    p.add_argument("--optimizer", default=NELDER_MEAD)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--min-views", type=int, default=2)
    p.add_argument("--out", required=True)


def _run_refine(args) -> int:
    rendered = io.scene_from_dict(io.load_json(args.scene))
    cameras = rendered.scene.cameras
    init_frames = io.pose_frames_from_dict(io.load_json(args.init))
    cfg = RefineConfig(optimizer=args.optimizer, max_iters=args.max_iters)

    out_frames = []
    for frame in sorted(init_frames):
        annotations, _ = build_annotations(
            cameras, rendered.detections.get(frame, []), lam=args.lam,
            min_views=args.min_views)
        scorable = [a for a in annotations if a.n_views >= args.min_views]
        poses = [item.pose for item in init_frames[frame]]
        matches = match_poses_to_annotations(poses, scorable, args.match_distance)
        vehicles = []
        diagnostics = []
        for i, item in enumerate(init_frames[frame]):
            if i not in matches:
                vehicles.append(io.pose_to_dict(item))
                diagnostics.append({"id": item.vehicle_id, "status": "unmatched"})
                continue
            result = refine_pose(cameras, item.pose, scorable[matches[i]], cfg)
            vehicles.append(io.pose_to_dict(EvaluatedPose(
                pose=result.pose, vehicle_id=item.vehicle_id,
                visibility=item.visibility, score=item.score)))
            diagnostics.append({"id": item.vehicle_id, "status": "refined",
                                **result.to_dict()})
        loss = multi_view_loss(
            cameras, [item.pose for item in init_frames[frame]], scorable,
            detection_camera_id=sorted(cameras)[0],
            detections_for_focal=[
                d for d in rendered.detections.get(frame, [])
                if d.camera_id == sorted(cameras)[0]],
            match_distance=args.match_distance, min_views=args.min_views)
        out_frames.append({"frame": frame, "vehicles": vehicles,
                           "refine": diagnostics,
                           "initial_loss": loss.to_dict()})
    io.dump_json({"frames": out_frames}, args.out)
    return 0


def _add_eval(subparsers) -> None:
    p = subparsers.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--buckets", type=str, default="",
                   help="bucket edges, e.g. '0,0.25,0.5,0.75,1'")
    p.add_argument("--bucket-by", choices=["visibility", "depth"],
                   default="visibility")
    p.add_argument("--depth-camera", help="camera id for depth bucketing")
    p.add_argument("--calib", help="calibration file (depth bucketing)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="write the JSON report here")


def _run_eval(args) -> int:
    preds = io.pose_frames_from_dict(io.load_json(args.pred))
    gts = io.pose_frames_from_dict(io.load_json(args.gt))
    buckets = None
    if args.buckets:
        edges = tuple(float(v) for v in args.buckets.split(","))
        camera = None
        if args.bucket_by == "depth":
            if not (args.calib and args.depth_camera):
                raise ValueError("depth bucketing needs --calib and --depth-camera")
            camera = io.calibration_from_dict(
                io.load_json(args.calib))[args.depth_camera]
        buckets = BucketSpec(edges=edges, by=args.bucket_by, camera=camera)
    cfg = MatchingConfig(distance_threshold=args.threshold)
    # Frame-parallel evaluation with a deterministic ordered reduce.
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        report = evaluate(preds, gts, cfg, buckets, map_fn=pool.map)
    print(report.to_table())
    if report.empty:
        logger.warning("no matches anywhere; report contains counts only")
    if args.out:
        io.dump_json(report.to_dict(), args.out)
    return 0


def _add_serve(subparsers) -> None:
    p = subparsers.add_parser("serve", help="run the annotation backend")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None,
                   help="built labelling UI to host at /ui (auto-detected "
                        "from a repo checkout when omitted)")


def _run_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        if (candidate / "index.html").exists():
            ui_dir = candidate
    app = create_app(args.data_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvgeo",
        description="multi-view 7DoF vehicle pose toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_simulate(subparsers)
    _add_annotate(subparsers)
    _add_sync(subparsers)
    _add_refine(subparsers)
    _add_eval(subparsers)
    _add_serve(subparsers)
    return parser


_RUNNERS = {
    "simulate": _run_simulate,
    "annotate": _run_annotate,
    "sync": _run_sync,
    "refine": _run_refine,
    "eval": _run_eval,
    "serve": _run_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MVGEO_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _RUNNERS[args.command](args)
    except (MvgeoError, ValueError, FileNotFoundError, KeyError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:    # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
