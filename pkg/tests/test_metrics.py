import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvgeo.box3d import Pose7DoF
from mvgeo.camera import look_at_camera
from mvgeo.metrics import (
    BucketSpec,
    EvaluatedPose,
    MatchingConfig,
    aoe,
    ase,
    ate,
    evaluate,
    match_predictions,
)


def _pose(x=0.0, y=0.0, z=0.75, l=4.0, w=2.0, h=1.5, yaw=0.0) -> Pose7DoF:
    return Pose7DoF(x, y, z, l, w, h, yaw)


def _ev(pose, vid="v", visibility=None, score=None) -> EvaluatedPose:
    return EvaluatedPose(pose=pose, vehicle_id=vid, visibility=visibility,
                         score=score)


class TestMatchPredictions:
    def test_within_threshold_matches(self):
        pairs, up, ug = match_predictions([_ev(_pose(0, 0))], [_ev(_pose(1, 0))],
                                          MatchingConfig(2.0))
        assert pairs == [(0, 0)] and not up and not ug

    def test_outside_threshold_unmatched(self):
        pairs, up, ug = match_predictions([_ev(_pose(5, 0))], [_ev(_pose(0, 0))],
                                          MatchingConfig(2.0))
        assert pairs == [] and up == [0] and ug == [0]

    def test_higher_score_wins(self):
        preds = [_ev(_pose(0.5, 0), score=0.3), _ev(_pose(0.4, 0), score=0.9)]
        gts = [_ev(_pose(0, 0))]
        pairs, up, _ = match_predictions(preds, gts, MatchingConfig(2.0))
        assert pairs == [(1, 0)]
        assert up == [0]

    def test_tie_breaks_to_lower_gt_index(self):
        preds = [_ev(_pose(0, 0), score=1.0)]
        gts = [_ev(_pose(1, 0)), _ev(_pose(-1, 0))]
        pairs, _, _ = match_predictions(preds, gts, MatchingConfig(2.0))
        assert pairs == [(0, 0)]


class TestPairMetrics:
    def test_ate_identical(self):
        assert ate(_pose(), _pose()) == 0.0

    def test_ate_345(self):
        assert math.isclose(ate(_pose(0, 0, 0.75), _pose(3, 4, 0.75)), 5.0,
                            abs_tol=1e-12)

    def test_ate_rigid_invariance(self):
        a, b = _pose(1, 2, 0.7), _pose(3, -1, 0.9)
        moved = lambda p: Pose7DoF(p.x + 10, p.y - 4, p.z, p.l, p.w, p.h,
                                   p.yaw + 0.3)
        assert math.isclose(ate(a, b), ate(moved(a), moved(b)), abs_tol=1e-12)

    def test_ase_equal_dims(self):
        assert ase(_pose(l=4, w=2), _pose(l=4, w=2)) == 0.0

    def test_ase_hand_computed(self):
        assert math.isclose(ase(_pose(l=4, w=2), _pose(l=5, w=2)), 0.2,
                            abs_tol=1e-12)

    def test_ase_no_dimension_permutation(self):
        # Alignment does not swap l and w: 4x2 vs 2x4 keeps the mismatch.
        value = ase(_pose(l=4, w=2), _pose(l=2, w=4))
        assert math.isclose(value, 2 / 3, abs_tol=1e-12)

    def test_ase_symmetric(self):
        a, b = _pose(l=4.4, w=1.7), _pose(l=3.6, w=2.1)
        assert math.isclose(ase(a, b), ase(b, a), abs_tol=1e-15)

    def test_aoe_simple(self):
        value = aoe(_pose(yaw=0.1), _pose(yaw=-0.1))
        assert math.isclose(value, math.degrees(0.2), abs_tol=1e-9)

    def test_aoe_wraparound(self):
        value = aoe(_pose(yaw=3.1), _pose(yaw=-3.1))
        assert math.isclose(value, math.degrees(2 * math.pi - 6.2), abs_tol=1e-9)

    def test_aoe_equal(self):
        assert aoe(_pose(yaw=1.0), _pose(yaw=1.0)) == 0.0

    @given(a=st.floats(-math.pi, math.pi), b=st.floats(-math.pi, math.pi))
    @settings(max_examples=100, deadline=None)
    def test_aoe_bounds_and_symmetry(self, a, b):
        value = aoe(_pose(yaw=a), _pose(yaw=b))
        assert 0.0 <= value <= 180.0
        assert math.isclose(value, aoe(_pose(yaw=b), _pose(yaw=a)), abs_tol=1e-9)

    def test_aoe_modulo_180(self):
        flipped = aoe(_pose(yaw=0.0), _pose(yaw=math.pi), modulo_180=True)
        assert math.isclose(flipped, 0.0, abs_tol=1e-9)
        assert math.isclose(aoe(_pose(yaw=0.0), _pose(yaw=math.pi)), 180.0,
                            abs_tol=1e-9)
        assert math.isclose(
            aoe(_pose(yaw=0.1), _pose(yaw=0.1 + math.pi * 0.9), modulo_180=True),
            math.degrees(math.pi * 0.1), abs_tol=1e-9)


class TestEvaluate:
    def test_perfect_predictions(self):
        frames = {0: [_ev(_pose(0, 0), "a"), _ev(_pose(10, 0), "b")],
                  1: [_ev(_pose(5, 5), "c")]}
        report = evaluate(frames, frames)
        assert report.matches == 3
        assert report.metrics["ate"].mean == 0.0
        assert report.metrics["ase"].mean == 0.0
        assert report.metrics["aoe"].mean == 0.0
        assert report.metrics["iou_3d"].mean == pytest.approx(1.0)
        assert report.metrics["iou_bev"].mean == pytest.approx(1.0)
        assert report.metrics["ate"].std == 0.0

    def test_mean_and_population_std(self):
        gts = {0: [_ev(_pose(0, 0), "a"), _ev(_pose(20, 0), "b")]}
        preds = {0: [_ev(_pose(1, 0), "a"), _ev(_pose(23, 0), "b")]}
        report = evaluate(preds, gts, MatchingConfig(5.0))
        assert report.metrics["ate"].mean == pytest.approx(2.0)
        assert report.metrics["ate"].std == pytest.approx(1.0)

    def test_constructed_uniform_shift(self):
        rng = np.random.default_rng(0)
        gts = {f: [_ev(_pose(rng.uniform(-20, 20), rng.uniform(-20, 20),
                             yaw=rng.uniform(-3, 3)), f"v{i}")
                   for i in range(4)] for f in range(5)}
        preds = {f: [_ev(Pose7DoF(e.pose.x + 0.5, e.pose.y, e.pose.z,
                                  e.pose.l, e.pose.w, e.pose.h, e.pose.yaw),
                         e.vehicle_id)
                     for e in vehicles] for f, vehicles in gts.items()}
        report = evaluate(preds, gts)
        assert report.metrics["ate"].mean == pytest.approx(0.5, abs=1e-9)
        assert report.metrics["ate"].std == pytest.approx(0.0, abs=1e-9)

    def test_empty_evaluation_flagged(self):
        report = evaluate({0: [_ev(_pose(0, 0))]}, {0: [_ev(_pose(50, 50))]})
        assert report.empty
        assert report.matches == 0
        assert report.false_positives == 1
        assert report.missed_gt == 1
        assert report.metrics["ate"].mean is None

    def test_frame_and_pose_order_invariance(self):
        rng = np.random.default_rng(1)
        gts = {f: [_ev(_pose(rng.uniform(-20, 20), rng.uniform(-20, 20)),
                       f"v{i}", score=None)
                   for i in range(3)] for f in range(4)}
        preds = {f: [_ev(Pose7DoF(e.pose.x + rng.uniform(-0.5, 0.5),
                                  e.pose.y, e.pose.z, e.pose.l, e.pose.w,
                                  e.pose.h, e.pose.yaw), e.vehicle_id,
                         score=rng.uniform(0.5, 1.0))
                     for e in vehicles] for f, vehicles in gts.items()}
        report_a = evaluate(preds, gts)
        shuffled_preds = {f: list(reversed(v)) for f, v in preds.items()}
        report_b = evaluate(shuffled_preds, gts)
        assert report_a.metrics["ate"].mean == pytest.approx(
            report_b.metrics["ate"].mean, abs=1e-12)

    def test_rigid_transform_invariance(self):
        rng = np.random.default_rng(2)
        gts = {0: [_ev(_pose(rng.uniform(-10, 10), rng.uniform(-10, 10),
                             yaw=rng.uniform(-3, 3)), f"v{i}")
                   for i in range(5)]}
        preds = {0: [_ev(Pose7DoF(e.pose.x + rng.uniform(-0.8, 0.8),
                                  e.pose.y + rng.uniform(-0.8, 0.8),
                                  e.pose.z, e.pose.l, e.pose.w, e.pose.h,
                                  e.pose.yaw + rng.uniform(-0.2, 0.2)),
                         e.vehicle_id)
                     for e in gts[0]]}
        base = evaluate(preds, gts)

        angle = 0.83
        cos, sin = math.cos(angle), math.sin(angle)

        def move(e: EvaluatedPose) -> EvaluatedPose:
            p = e.pose
            return _ev(Pose7DoF(cos * p.x - sin * p.y + 7.0,
                                sin * p.x + cos * p.y - 3.0,
                                p.z, p.l, p.w, p.h, p.yaw + angle),
                       e.vehicle_id)

        moved = evaluate({0: [move(e) for e in preds[0]]},
                         {0: [move(e) for e in gts[0]]})
        for name in ("ate", "ase", "aoe", "iou_3d", "iou_bev"):
            assert base.metrics[name].mean == pytest.approx(
                moved.metrics[name].mean, abs=1e-9)

    def test_buckets_recombine_to_pooled_mean(self):
        rng = np.random.default_rng(3)
        gts = {0: [_ev(_pose(i * 10.0, 0), f"v{i}", visibility=rng.uniform())
                   for i in range(8)]}
        preds = {0: [_ev(Pose7DoF(e.pose.x + rng.uniform(-1, 1), e.pose.y,
                                  e.pose.z, e.pose.l, e.pose.w, e.pose.h,
                                  e.pose.yaw), e.vehicle_id)
                     for e in gts[0]]}
        spec = BucketSpec(edges=(0.0, 0.25, 0.5, 0.75, 1.0))
        report = evaluate(preds, gts, buckets=spec)
        total = sum(b.metrics["ate"].mean * b.metrics["ate"].count
                    for b in report.buckets.values())
        count = sum(b.metrics["ate"].count for b in report.buckets.values())
        assert count == report.matches
        assert total / count == pytest.approx(report.metrics["ate"].mean,
                                              abs=1e-12)

    def test_depth_buckets(self, hd_intrinsics):
        camera = look_at_camera("c", (0, -30, 8), (0, 0, 0), hd_intrinsics)
        gts = {0: [_ev(_pose(0, 0), "near"), _ev(_pose(0, 40), "far")]}
        preds = gts
        spec = BucketSpec(edges=(0.0, 50.0, 100.0), by="depth", camera=camera)
        report = evaluate(preds, gts, buckets=spec)
        assert len(report.buckets) == 2

    def test_table_rendering(self):
        report = evaluate({0: [_ev(_pose(0, 0))]}, {0: [_ev(_pose(1, 0))]})
        table = report.to_table()
        assert "ate" in table and "matches=1" in table
