import math

import numpy as np
import pytest

from conftest import make_separated_scene, SEPARATED_LAMBDA
from mvgeo.box3d import Pose7DoF
from mvgeo.errors import (
    DimensionMismatch,
    NonDifferentiablePoint,
    NoUsableViews,
)
from mvgeo.mvloss import (
    Heatmap,
    focal_loss,
    loss_gradient,
    match_poses_to_annotations,
    multi_view_loss,
    render_center_heatmap,
    render_peak_heatmap,
    reprojection_giou_term,
)
from mvgeo.simulator import annotations_from_truth
from oracles import fd_gradient


class TestRenderCenterHeatmap:
    def test_single_center_peak_is_one(self):
        hm = render_center_heatmap([(100, 60)], [(40, 30)], dims=(480, 270))
        assert hm.values[15, 25] == 1.0

    def test_empty_centers_all_zero(self):
        hm = render_center_heatmap([], [], dims=(480, 270))
        assert hm.values.max() == 0.0

    def test_overlapping_gaussians_max_composited(self):
        hm = render_center_heatmap([(100, 100), (104, 100)],
                                   [(60, 60), (60, 60)], dims=(480, 270))
        assert hm.values.max() <= 1.0
        assert (hm.values[25, 25], hm.values[25, 26]) == (1.0, 1.0)

    def test_sigma_floor(self):
        # Tiny boxes still get sigma 1 cell, so neighbors are nonzero.
        hm = render_center_heatmap([(100, 100)], [(2, 2)], dims=(480, 270))
        assert hm.values[25, 26] > 0.5


class TestFocalLoss:
    def test_perfect_prediction_zero(self):
        target = render_peak_heatmap([(10, 10)], dims=(32, 32))
        assert focal_loss(target, target) == 0.0

    def test_half_confidence_at_peak(self):
        target = Heatmap(values=np.ones((1, 1)))
        pred = Heatmap(values=np.full((1, 1), 0.5))
        assert math.isclose(focal_loss(pred, target), 0.25 * math.log(2),
                            rel_tol=1e-9)

    def test_false_positive_cell(self):
        target = Heatmap(values=np.zeros((1, 1)))
        pred = Heatmap(values=np.full((1, 1), 0.5))
        assert math.isclose(focal_loss(pred, target), 0.25 * math.log(2),
                            rel_tol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            focal_loss(Heatmap(values=np.zeros((2, 2))),
                       Heatmap(values=np.zeros((3, 3))))

    def test_positive_unless_ideal(self):
        target = render_center_heatmap([(100, 100)], [(40, 40)], dims=(64, 64))
        assert focal_loss(target, target) > 0.0   # Gaussian tails penalized


class TestReprojectionGiouTerm:
    def test_zero_at_ground_truth(self):
        scene, rendered = make_separated_scene(0)
        annotations = annotations_from_truth(rendered, 0)
        poses = {v.vehicle_id: v.pose for v in scene.frames[0].vehicles}
        for annotation, vid in zip(annotations, sorted(poses)):
            term, per_view, n = reprojection_giou_term(
                scene.cameras, poses[vid], annotation)
            assert term == pytest.approx(0.0, abs=1e-12)
            assert n == len(annotation.members)
            assert all(math.isclose(g, 1.0) for g in per_view.values())

    def test_excluding_detection_camera_reduces_views(self):
        scene, rendered = make_separated_scene(0)
        annotation = annotations_from_truth(rendered, 0)[0]
        pose = scene.frames[0].vehicles[0].pose
        _, _, n_all = reprojection_giou_term(scene.cameras, pose, annotation)
        some_member = sorted(annotation.members)[0]
        _, per_view, n = reprojection_giou_term(
            scene.cameras, pose, annotation, exclude_camera=some_member)
        assert n == n_all - 1
        assert some_member not in per_view

    def test_translated_pose_scores_worse(self):
        for seed in range(20):
            scene, rendered = make_separated_scene(seed)
            annotation = annotations_from_truth(rendered, 0)[0]
            vid = sorted({v.vehicle_id for v in scene.frames[0].vehicles})[0]
            pose = next(v.pose for v in scene.frames[0].vehicles
                        if v.vehicle_id == vid)
            moved = Pose7DoF(pose.x + 2.0, pose.y, pose.z, pose.l, pose.w,
                             pose.h, pose.yaw)
            at_gt, _, _ = reprojection_giou_term(scene.cameras, pose, annotation)
            displaced, _, _ = reprojection_giou_term(scene.cameras, moved, annotation)
            assert displaced > at_gt

    def test_no_usable_views(self, identity_camera):
        from mvgeo.association import Detection2D, MultiViewAnnotation
        from mvgeo.box3d import Box2D

        annotation = MultiViewAnnotation(
            cluster_id=0, frame=0,
            members={"ident": Detection2D(
                camera_id="ident", frame=0, box=Box2D(0, 0, 10, 10), score=1.0)},
            centroid=(0.0, 0.0))
        behind = Pose7DoF(0, 0, -30, 4, 2, 1.5, 0)
        with pytest.raises(NoUsableViews):
            reprojection_giou_term({"ident": identity_camera}, behind, annotation)


class TestMultiViewLoss:
    def test_zero_at_ground_truth(self):
        for seed in range(5):
            scene, rendered = make_separated_scene(seed)
            annotations = annotations_from_truth(rendered, 0)
            poses = [v.pose for v in scene.frames[0].vehicles]
            cam0_dets = [d for d in rendered.detections[0]
                         if d.camera_id == "cam0"]
            breakdown = multi_view_loss(
                scene.cameras, poses, annotations, "cam0",
                detections_for_focal=cam0_dets,
                match_distance=SEPARATED_LAMBDA)
            assert breakdown.total == pytest.approx(0.0, abs=1e-9)
            assert breakdown.total == breakdown.giou_term + breakdown.focal_term

    def test_arithmetic_composition(self):
        # total = mean(1 - GIoU) + focal, checked on one synthetic frame.
        scene, rendered = make_separated_scene(1)
        annotations = annotations_from_truth(rendered, 0)
        poses = [v.pose for v in scene.frames[0].vehicles]
        moved = [Pose7DoF(p.x + 0.5, p.y, p.z, p.l, p.w, p.h, p.yaw)
                 for p in poses]
        cam0_dets = [d for d in rendered.detections[0] if d.camera_id == "cam0"]
        breakdown = multi_view_loss(
            scene.cameras, moved, annotations, "cam0",
            detections_for_focal=cam0_dets, match_distance=SEPARATED_LAMBDA)
        per_pose_terms = []
        for i, giou_map in breakdown.per_view_giou.items():
            per_pose_terms.append(
                sum(1.0 - g for g in giou_map.values()) / len(giou_map))
        assert breakdown.giou_term == pytest.approx(np.mean(per_pose_terms))
        assert breakdown.total == pytest.approx(
            breakdown.giou_term + breakdown.focal_term)
        assert breakdown.giou_term > 0.0

    def test_empty_pose_list(self):
        scene, rendered = make_separated_scene(0)
        annotations = annotations_from_truth(rendered, 0)
        breakdown = multi_view_loss(scene.cameras, [], annotations, "cam0")
        assert breakdown.total == 0.0
        assert breakdown.views_used == 0

    def test_unmatched_pose_recorded(self):
        scene, rendered = make_separated_scene(0)
        annotations = annotations_from_truth(rendered, 0)
        faraway = [Pose7DoF(200.0, 200.0, 0.75, 4, 2, 1.5, 0)]
        breakdown = multi_view_loss(
            scene.cameras, faraway, annotations, "cam0",
            detections_for_focal=[], match_distance=SEPARATED_LAMBDA)
        assert breakdown.skipped == {0: "unmatched"}

    def test_giou_term_invariant_to_member_order(self):
        scene, rendered = make_separated_scene(2)
        annotations = annotations_from_truth(rendered, 0)
        pose = scene.frames[0].vehicles[0].pose
        moved = Pose7DoF(pose.x + 0.7, pose.y - 0.4, pose.z, pose.l, pose.w,
                         pose.h, pose.yaw + 0.1)
        ann = annotations[0]
        term_fwd, _, _ = reprojection_giou_term(scene.cameras, moved, ann)
        from mvgeo.association import MultiViewAnnotation
        reversed_members = dict(reversed(list(ann.members.items())))
        ann_rev = MultiViewAnnotation(cluster_id=ann.cluster_id, frame=ann.frame,
                                      members=reversed_members,
                                      centroid=ann.centroid)
        term_rev, _, _ = reprojection_giou_term(scene.cameras, moved, ann_rev)
        assert term_fwd == pytest.approx(term_rev, abs=1e-15)

    def test_continuity_along_translation_sweep(self):
        scene, rendered = make_separated_scene(3)
        annotation = annotations_from_truth(rendered, 0)[0]
        vid = sorted(a.cluster_id for a in annotations_from_truth(rendered, 0))
        pose = scene.frames[0].vehicles[0].pose
        values = []
        for t in np.linspace(-1.0, 1.0, 1000):
            moved = Pose7DoF(pose.x + t, pose.y, pose.z, pose.l, pose.w,
                             pose.h, pose.yaw)
            term, _, n = reprojection_giou_term(scene.cameras, moved, annotation)
            values.append((term, n))
        n_views = {n for _, n in values}
        assert len(n_views) == 1        # no view enters/leaves on this sweep
        terms = np.array([t for t, _ in values])
        assert np.abs(np.diff(terms)).max() < 0.01


class TestMatchPoses:
    def test_greedy_nearest(self):
        from mvgeo.association import Detection2D, MultiViewAnnotation
        from mvgeo.box3d import Box2D

        def ann(idx, cx, cy):
            return MultiViewAnnotation(
                cluster_id=idx, frame=0,
                members={"cam0": Detection2D("cam0", 0, Box2D(0, 0, 1, 1), 1.0)},
                centroid=(cx, cy))

        poses = [Pose7DoF(0, 0, 0.75, 4, 2, 1.5, 0),
                 Pose7DoF(1.4, 0, 0.75, 4, 2, 1.5, 0)]
        annotations = [ann(0, 1.0, 0.0), ann(1, 10.0, 0.0)]
        matches = match_poses_to_annotations(poses, annotations, max_distance=2.0)
        assert matches == {1: 0}        # nearest pair wins; pose 0 unmatched


class TestLossGradient:
    def _smooth_case(self, seed):
        scene, rendered = make_separated_scene(seed)
        annotation = annotations_from_truth(rendered, 0)[0]
        gt = scene.frames[0].vehicles[0].pose
        rng = np.random.default_rng(seed + 1000)
        pose = Pose7DoF(gt.x + rng.uniform(0.4, 1.2) * rng.choice([-1, 1]),
                        gt.y + rng.uniform(0.4, 1.2) * rng.choice([-1, 1]),
                        gt.z + rng.uniform(-0.2, 0.2),
                        gt.l, gt.w, gt.h,
                        gt.yaw + rng.uniform(-0.3, 0.3))
        return scene, annotation, pose

    def test_matches_independent_oracle(self):
        from oracles import is_smooth_config

        checked = 0
        seed = 0
        while checked < 25:
            seed += 1
            assert seed < 200
            scene, annotation, pose = self._smooth_case(seed)
            if not is_smooth_config(scene.cameras, pose, annotation):
                continue
            try:
                grad = loss_gradient(scene.cameras, pose, annotation)
            except NonDifferentiablePoint:
                continue
            oracle = fd_gradient(scene.cameras, pose, annotation)
            rel = np.linalg.norm(grad - oracle) / max(np.linalg.norm(oracle), 1e-12)
            assert rel < 1e-4
            checked += 1

    def test_small_gradient_at_minimum(self):
        scene, rendered = make_separated_scene(1)
        annotation = annotations_from_truth(rendered, 0)[0]
        gt = scene.frames[0].vehicles[0].pose
        grad = loss_gradient(scene.cameras, gt, annotation)
        assert np.linalg.norm(grad) < 1e-3

    def test_gradient_points_back_toward_truth(self):
        hits = 0
        for seed in range(20):
            scene, rendered = make_separated_scene(seed)
            annotation = annotations_from_truth(rendered, 0)[0]
            gt = scene.frames[0].vehicles[0].pose
            displaced = Pose7DoF(gt.x + 1.0, gt.y, gt.z, gt.l, gt.w, gt.h, gt.yaw)
            try:
                grad = loss_gradient(scene.cameras, displaced, annotation)
            except NonDifferentiablePoint:
                continue
            assert grad[0] > 0.0
            hits += 1
        assert hits >= 15

    def test_non_differentiable_at_clamp_boundary(self):
        # Place the pose so the finite-difference probes straddle the point
        # where one view's projection starts clipping the image edge; the
        # gradient must refuse instead of differencing across the kink.
        scene, rendered = make_separated_scene(0)
        annotation = annotations_from_truth(rendered, 0)[0]
        gt = scene.frames[0].vehicles[0].pose
        cam = scene.cameras[sorted(annotation.members)[0]]
        from mvgeo.box3d import project_to_box2d

        def clipped(t: float) -> bool:
            pose = Pose7DoF(gt.x + t, gt.y, gt.z, gt.l, gt.w, gt.h, gt.yaw)
            try:
                box = project_to_box2d(cam, pose, clamp=False)
            except Exception:
                return True        # view validity flips are kinks too
            return (box.x_min < 0 or box.y_min < 0
                    or box.x_max > cam.intrinsics.width
                    or box.y_max > cam.intrinsics.height)

        lo, hi = 0.0, 40.0
        assert not clipped(lo)
        assert clipped(hi)
        for _ in range(60):             # bisect the clamp activation point
            mid = (lo + hi) / 2.0
            if clipped(mid):
                hi = mid
            else:
                lo = mid
        at_kink = Pose7DoF(gt.x + (lo + hi) / 2.0, gt.y, gt.z,
                           gt.l, gt.w, gt.h, gt.yaw)
        with pytest.raises(NonDifferentiablePoint):
            loss_gradient(scene.cameras, at_kink, annotation)
