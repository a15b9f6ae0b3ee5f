"""Evaluation suite: prediction-to-GT matching, ATE/ASE/AOE and IoU
metrics, pooled mean/std aggregation, and visibility/depth bucketing.

ASE is defined as 1 - IoU of the two footprints after aligning rotation
and translation (concentric, axis-aligned, l with l and w with w). Note
this equals the proportional footprint-area difference only when one
aligned footprint contains the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .box3d import Pose7DoF, iou_3d, iou_bev
from .camera import Camera

METRIC_NAMES = ("ate", "ase", "aoe", "iou_3d", "iou_bev")


@dataclass(frozen=True)
class MatchingConfig:
    """Greedy BEV center-distance matching within a threshold (meters)."""

    distance_threshold: float = 2.0

    def __post_init__(self):
        if self.distance_threshold <= 0:
            raise ValueError("matching threshold must be positive")


@dataclass(frozen=True)
class EvaluatedPose:
    """A pose with the optional per-vehicle evaluation attributes."""

    pose: Pose7DoF
    vehicle_id: str = ""
    visibility: float | None = None
    score: float | None = None


@dataclass
class MetricSummary:
    mean: float | None
    std: float | None
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "count": self.count}


@dataclass
class EvalReport:
    metrics: dict[str, MetricSummary]
    matches: int
    missed_gt: int
    false_positives: int
    buckets: dict[str, "EvalReport"] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.matches == 0

    def to_dict(self) -> dict:
        out = {
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "matches": self.matches,
            "missed_gt": self.missed_gt,
            "false_positives": self.false_positives,
            "std_convention": "population",
        }
        if self.buckets:
            out["buckets"] = {k: v.to_dict() for k, v in self.buckets.items()}
        return out

    def to_table(self) -> str:
        lines = ["# s = population standard deviation (divide by N)",
                 "metric      mean         s",
                 "-------  ---------  ---------"]
        for name in METRIC_NAMES:
            summary = self.metrics[name]
            if summary.mean is None:
                lines.append(f"{name:<7}        n/a        n/a")
            else:
                lines.append(f"{name:<7}  {summary.mean:9.4f}  {summary.std:9.4f}")
        lines.append(f"matches={self.matches} missed={self.missed_gt} "
                     f"false_positives={self.false_positives}")
        return "\n".join(lines)


def match_predictions(preds: list[EvaluatedPose], gts: list[EvaluatedPose],
                      cfg: MatchingConfig = MatchingConfig(),
                      ) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Greedy matching of one frame's predictions to ground truth.

    Predictions are visited by descending score (input order on ties);
    each takes the nearest unmatched GT within the BEV distance threshold,
    lower GT index on distance ties. Returns (matched index pairs,
    unmatched pred indices, unmatched gt indices).
    """
    order = sorted(range(len(preds)),
                   key=lambda i: (-(preds[i].score if preds[i].score is not None else 0.0), i))
    taken: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for i in order:
        p = preds[i].pose
        best_j, best_d = None, None
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            d = math.hypot(p.x - gt.pose.x, p.y - gt.pose.y)
            if d <= cfg.distance_threshold and (best_d is None or d < best_d):
                best_j, best_d = j, d
        if best_j is not None:
            pairs.append((i, best_j))
            taken.add(best_j)
    matched_preds = {i for i, _ in pairs}
    unmatched_preds = [i for i in range(len(preds)) if i not in matched_preds]
    unmatched_gts = [j for j in range(len(gts)) if j not in taken]
    return pairs, unmatched_preds, unmatched_gts


def ate(pred: Pose7DoF, gt: Pose7DoF) -> float:
    """Euclidean distance between the 3D box centers (meters)."""
    return math.sqrt((pred.x - gt.x) ** 2 + (pred.y - gt.y) ** 2
                     + (pred.z - gt.z) ** 2)


def ase(pred: Pose7DoF, gt: Pose7DoF) -> float:
    """1 - IoU of the footprints after aligning rotation and translation."""
    inter = min(pred.l, gt.l) * min(pred.w, gt.w)
    union = pred.l * pred.w + gt.l * gt.w - inter
    return 1.0 - inter / union


def aoe(pred: Pose7DoF, gt: Pose7DoF, modulo_180: bool = False) -> float:
    """Smallest yaw angle between the orientations, in degrees.

    Measured over the full circle by default; `modulo_180` treats opposing
    headings as equal (some benchmarks score orientation that way).
    """
    period = math.pi if modulo_180 else 2.0 * math.pi
    diff = math.fmod(pred.yaw - gt.yaw, period)
    if diff > period / 2.0:
        diff -= period
    elif diff < -period / 2.0:
        diff += period
    return math.degrees(abs(diff))


def _pair_metrics(pred: Pose7DoF, gt: Pose7DoF) -> dict[str, float]:
    return {
        "ate": ate(pred, gt),
        "ase": ase(pred, gt),
        "aoe": aoe(pred, gt),
        "iou_3d": iou_3d(pred, gt),
        "iou_bev": iou_bev(pred, gt),
    }


def _summarize(values: dict[str, list[float]], matches: int, missed: int,
               false_pos: int) -> EvalReport:
    metrics = {}
    for name in METRIC_NAMES:
        vals = values[name]
        if vals:
            arr = np.asarray(vals)
            metrics[name] = MetricSummary(
                mean=float(arr.mean()), std=float(arr.std()), count=len(vals))
        else:
            metrics[name] = MetricSummary(mean=None, std=None, count=0)
    return EvalReport(metrics=metrics, matches=matches, missed_gt=missed,
                      false_positives=false_pos)


@dataclass(frozen=True)
class BucketSpec:
    """Bucket matched pairs by the GT visibility field or by GT depth from
    a designated camera. Edges define [e0, e1), ..., [e_{n-2}, e_{n-1}]."""

    edges: tuple[float, ...]
    by: str = "visibility"          # "visibility" | "depth"
    camera: Camera | None = None

    def __post_init__(self):
        if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bucket edges must be strictly increasing, >= 2")
        if self.by not in ("visibility", "depth"):
            raise ValueError("bucket key must be 'visibility' or 'depth'")
        if self.by == "depth" and self.camera is None:
            raise ValueError("depth bucketing needs a camera")

    def key_of(self, gt: EvaluatedPose) -> float | None:
        if self.by == "visibility":
            return gt.visibility
        center = self.camera.extrinsics.center
        return math.sqrt((gt.pose.x - center[0]) ** 2
                         + (gt.pose.y - center[1]) ** 2
                         + (gt.pose.z - center[2]) ** 2)

    def label_of(self, value: float) -> str | None:
        for lo, hi in zip(self.edges, self.edges[1:]):
            if lo <= value < hi or (hi == self.edges[-1] and value == hi):
                return f"{self.by}[{lo:g},{hi:g})"
        return None


@dataclass
class FramePartial:
    """Per-frame evaluation partial; combining partials is associative."""

    values: dict[str, list[float]]
    bucket_values: dict[str, dict[str, list[float]]]
    matches: int
    missed: int
    false_positives: int


def evaluate_frame(preds: list[EvaluatedPose], gts: list[EvaluatedPose],
                   cfg: MatchingConfig = MatchingConfig(),
                   buckets: BucketSpec | None = None) -> FramePartial:
    """Match one frame and collect its pair metrics (parallel-safe)."""
    values: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    bucket_values: dict[str, dict[str, list[float]]] = {}
    pairs, unmatched_pred, unmatched_gt = match_predictions(preds, gts, cfg)
    for i, j in pairs:
        pair = _pair_metrics(preds[i].pose, gts[j].pose)
        for name, value in pair.items():
            values[name].append(value)
        if buckets is not None:
            key = buckets.key_of(gts[j])
            label = buckets.label_of(key) if key is not None else None
            if label is not None:
                sink = bucket_values.setdefault(
                    label, {name: [] for name in METRIC_NAMES})
                for name, value in pair.items():
                    sink[name].append(value)
    return FramePartial(values=values, bucket_values=bucket_values,
                        matches=len(pairs), missed=len(unmatched_gt),
                        false_positives=len(unmatched_pred))


def combine_partials(partials: list[FramePartial]) -> EvalReport:
    """Reduce frame partials (in frame order) into the pooled report."""
    values: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    bucket_values: dict[str, dict[str, list[float]]] = {}
    matches = missed = false_pos = 0
    for partial in partials:
        matches += partial.matches
        missed += partial.missed
        false_pos += partial.false_positives
        for name in METRIC_NAMES:
            values[name].extend(partial.values[name])
        for label, sink in partial.bucket_values.items():
            dest = bucket_values.setdefault(
                label, {name: [] for name in METRIC_NAMES})
            for name in METRIC_NAMES:
                dest[name].extend(sink[name])

    report = _summarize(values, matches, missed, false_pos)
    for label in sorted(bucket_values):
        report.buckets[label] = _summarize(
            bucket_values[label], len(bucket_values[label][METRIC_NAMES[0]]), 0, 0)
    return report


def evaluate(pred_frames: dict[int, list[EvaluatedPose]],
             gt_frames: dict[int, list[EvaluatedPose]],
             cfg: MatchingConfig = MatchingConfig(),
             buckets: BucketSpec | None = None,
             map_fn=map) -> EvalReport:
    """Match per frame, pool pair metrics across frames, and aggregate.

    Means use population std (divide by N). Frames present on only one
    side contribute misses or false positives. A report with zero matches
    is still returned (flagged via .empty) with counts only. `map_fn` may
    be a thread pool's map; the reduce is ordered so results do not depend
    on scheduling.
    """
    frames = sorted(set(pred_frames) | set(gt_frames))
    partials = list(map_fn(
        lambda f: evaluate_frame(pred_frames.get(f, []), gt_frames.get(f, []),
                                 cfg, buckets),
        frames))
    return combine_partials(partials)
