import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvgeo.box3d import (
    BevRect,
    Box2D,
    Pose7DoF,
    corners,
    footprint_intersection_area,
    giou_2d,
    iou_2d,
    iou_3d,
    iou_bev,
    project_to_box2d,
)
from mvgeo.camera import project_point
from mvgeo.errors import BehindCamera, EmptyAfterClamp, ZeroEnclosingArea
from oracles import grid_giou_2d, mc_iou_3d, mc_iou_bev

pose_strategy = st.builds(
    Pose7DoF,
    x=st.floats(-10, 10), y=st.floats(-10, 10), z=st.floats(0.5, 2.0),
    l=st.floats(2.0, 6.0), w=st.floats(1.0, 2.5), h=st.floats(1.0, 2.5),
    yaw=st.floats(-math.pi, math.pi))


class TestPose7DoF:
    def test_rejects_nonpositive_dims(self):
        with pytest.raises(ValueError):
            Pose7DoF(0, 0, 0, -1, 2, 1, 0)

    def test_yaw_normalized_at_construction(self):
        pose = Pose7DoF(0, 0, 0.5, 4, 2, 1, yaw=3 * math.pi)
        assert math.isclose(pose.yaw, math.pi)
        pose = Pose7DoF(0, 0, 0.5, 4, 2, 1, yaw=-math.pi)
        assert math.isclose(pose.yaw, math.pi)


class TestCorners:
    def test_axis_aligned_extents(self):
        pts = corners(Pose7DoF(0, 0, 0.5, 4, 2, 1, 0))
        assert set(np.round(pts[:, 0], 12)) == {-2.0, 2.0}
        assert set(np.round(pts[:, 1], 12)) == {-1.0, 1.0}
        assert set(np.round(pts[:, 2], 12)) == {0.0, 1.0}

    def test_quarter_turn_swaps_length_and_width(self):
        pts = corners(Pose7DoF(0, 0, 0.5, 4, 2, 1, math.pi / 2))
        assert set(np.round(pts[:, 0], 12)) == {-1.0, 1.0}
        assert set(np.round(pts[:, 1], 12)) == {-2.0, 2.0}

    def test_diagonal_yaw_corner_radius(self):
        side = math.sqrt(2.0)
        pts = corners(Pose7DoF(0, 0, 0.5, side, side, 1, math.pi / 4))
        radii = np.hypot(pts[:, 0], pts[:, 1])
        assert np.allclose(radii, 1.0)

    def test_ordering_bottom_ccw_then_top(self):
        pts = corners(Pose7DoF(0, 0, 0.5, 4, 2, 1, 0))
        assert np.allclose(pts[0], [2, 1, 0])      # front-left bottom
        assert np.allclose(pts[1], [-2, 1, 0])
        assert np.allclose(pts[2], [-2, -1, 0])
        assert np.allclose(pts[3], [2, -1, 0])
        assert np.allclose(pts[4:, 2], 1.0)
        assert np.allclose(pts[4:, :2], pts[:4, :2])


class TestProjectToBox2d:
    def test_centered_box_centered_projection(self, identity_camera):
        box = project_to_box2d(identity_camera,
                               Pose7DoF(0, 0, 20, 4, 2, 1, 0), clamp=False)
        assert math.isclose((box.x_min + box.x_max) / 2, 960.0, abs_tol=1e-9)
        assert math.isclose((box.y_min + box.y_max) / 2, 540.0, abs_tol=1e-9)

    def test_clamp_arithmetic(self):
        box = Box2D(-50, 100, 300, 2000)
        clamped = Box2D(min(max(box.x_min, 0), 1920), min(max(box.y_min, 0), 1080),
                        min(max(box.x_max, 0), 1920), min(max(box.y_max, 0), 1080))
        assert (clamped.x_min, clamped.y_min, clamped.x_max, clamped.y_max) \
            == (0, 100, 300, 1080)

    def test_clamp_against_camera(self, corner_camera):
        # A vehicle close to this camera projects partially out of frame.
        pose = Pose7DoF(-8.0, -2.0, 0.75, 4.5, 1.8, 1.5, 0.3)
        unclamped = project_to_box2d(corner_camera, pose, clamp=False)
        clamped = project_to_box2d(corner_camera, pose, clamp=True)
        assert clamped.x_min >= 0 and clamped.y_min >= 0
        assert clamped.x_max <= 1920 and clamped.y_max <= 1080
        assert clamped.area <= unclamped.area

    def test_tight_box_contains_all_corners(self, corner_camera):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pose = Pose7DoF(rng.uniform(-4, 4), rng.uniform(-4, 4), 0.75,
                            4.0, 2.0, 1.5, rng.uniform(-math.pi, math.pi))
            box = project_to_box2d(corner_camera, pose, clamp=False)
            for corner in corners(pose):
                u, v = project_point(corner_camera, corner)
                assert box.x_min - 1e-9 <= u <= box.x_max + 1e-9
                assert box.y_min - 1e-9 <= v <= box.y_max + 1e-9

    def test_behind_camera(self, identity_camera):
        with pytest.raises(BehindCamera):
            project_to_box2d(identity_camera,
                             Pose7DoF(0, 0, -20, 4, 2, 1, 0), clamp=False)

    def test_empty_after_clamp(self, identity_camera):
        # In front of the camera but far off to the side of the frustum.
        with pytest.raises(EmptyAfterClamp):
            project_to_box2d(identity_camera,
                             Pose7DoF(500, 0, 20, 4, 2, 1, 0), clamp=True)

    def test_shrinking_never_enlarges(self, corner_camera):
        rng = np.random.default_rng(4)
        for _ in range(20):
            pose = Pose7DoF(rng.uniform(-4, 4), rng.uniform(-4, 4), 0.9,
                            4.5, 2.0, 1.8, rng.uniform(-math.pi, math.pi))
            shrunk = Pose7DoF(pose.x, pose.y, pose.z, pose.l * 0.7,
                              pose.w * 0.7, pose.h * 0.7, pose.yaw)
            big = project_to_box2d(corner_camera, pose, clamp=False)
            small = project_to_box2d(corner_camera, shrunk, clamp=False)
            assert small.x_min >= big.x_min - 1e-9
            assert small.y_min >= big.y_min - 1e-9
            assert small.x_max <= big.x_max + 1e-9
            assert small.y_max <= big.y_max + 1e-9


class TestIou2d:
    def test_identical(self):
        box = Box2D(0, 0, 2, 2)
        assert iou_2d(box, box) == 1.0

    def test_hand_computed_overlap(self):
        assert math.isclose(iou_2d(Box2D(0, 0, 2, 2), Box2D(1, 1, 3, 3)), 1 / 7)

    def test_disjoint(self):
        assert iou_2d(Box2D(0, 0, 1, 1), Box2D(5, 5, 6, 6)) == 0.0

    def test_degenerate_zero_area(self):
        assert iou_2d(Box2D(1, 1, 1, 1), Box2D(1, 1, 1, 1)) == 0.0


class TestGiou2d:
    def test_identical(self):
        assert giou_2d(Box2D(0, 0, 2, 2), Box2D(0, 0, 2, 2)) == 1.0

    def test_hand_computed_overlapping(self):
        value = giou_2d(Box2D(0, 0, 2, 2), Box2D(1, 1, 3, 3))
        assert math.isclose(value, 1 / 7 - 2 / 9, abs_tol=1e-12)

    def test_hand_computed_disjoint(self):
        value = giou_2d(Box2D(0, 0, 1, 1), Box2D(2, 2, 3, 3))
        assert math.isclose(value, -7 / 9, abs_tol=1e-12)

    def test_grid_oracle_agreement(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = _random_box(rng)
            b = _random_box(rng)
            assert abs(giou_2d(a, b) - grid_giou_2d(a, b)) < 0.01

    def test_equals_iou_under_containment(self):
        outer = Box2D(0, 0, 10, 10)
        inner = Box2D(2, 3, 5, 6)
        assert math.isclose(giou_2d(outer, inner), iou_2d(outer, inner))

    def test_decreases_with_separation(self):
        a = Box2D(0, 0, 2, 2)
        values = [giou_2d(a, Box2D(d, 0, d + 2, 2)) for d in np.linspace(0, 10, 21)]
        assert all(v1 > v2 for v1, v2 in zip(values, values[1:]))

    def test_zero_enclosing_area(self):
        with pytest.raises(ZeroEnclosingArea):
            giou_2d(Box2D(1, 1, 1, 1), Box2D(1, 1, 1, 1))

    @given(x=st.floats(-5, 5), y=st.floats(-5, 5),
           w1=st.floats(0.5, 4), h1=st.floats(0.5, 4),
           w2=st.floats(0.5, 4), h2=st.floats(0.5, 4))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_bounded(self, x, y, w1, h1, w2, h2):
        a = Box2D(0, 0, w1, h1)
        b = Box2D(x, y, x + w2, y + h2)
        value = giou_2d(a, b)
        assert math.isclose(value, giou_2d(b, a), abs_tol=1e-12)
        assert -1.0 < value <= 1.0


def _random_box(rng) -> Box2D:
    x, y = rng.uniform(-5, 5, 2)
    w, h = rng.uniform(0.5, 6, 2)
    return Box2D(x, y, x + w, y + h)


def _random_pose_pair(rng) -> tuple[Pose7DoF, Pose7DoF]:
    a = Pose7DoF(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 1.5),
                 rng.uniform(3, 5.5), rng.uniform(1.5, 2.2), rng.uniform(1.2, 2.0),
                 rng.uniform(-math.pi, math.pi))
    b = Pose7DoF(a.x + rng.uniform(-3, 3), a.y + rng.uniform(-3, 3),
                 a.z + rng.uniform(-0.5, 0.5),
                 rng.uniform(3, 5.5), rng.uniform(1.5, 2.2), rng.uniform(1.2, 2.0),
                 rng.uniform(-math.pi, math.pi))
    return a, b


class TestIouBev:
    def test_identical(self):
        pose = Pose7DoF(1, 2, 0.75, 4, 2, 1.5, 0.3)
        assert math.isclose(iou_bev(pose, pose), 1.0)

    def test_hand_computed_offset(self):
        a = Pose7DoF(0, 0, 0.5, 4, 2, 1, 0)
        b = Pose7DoF(2, 0, 0.5, 4, 2, 1, 0)
        assert math.isclose(iou_bev(a, b), 1 / 3, abs_tol=1e-12)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(6)
        for i in range(50):
            a, b = _random_pose_pair(rng)
            assert abs(iou_bev(a, b) - mc_iou_bev(a, b, samples=10 ** 5, seed=i)) < 0.01


class TestIou3d:
    def test_identical(self):
        pose = Pose7DoF(1, 2, 0.75, 4, 2, 1.5, 0.3)
        assert math.isclose(iou_3d(pose, pose), 1.0)

    def test_full_vertical_overlap_matches_bev(self):
        a = Pose7DoF(0, 0, 0.5, 4, 2, 1, 0)
        b = Pose7DoF(2, 0, 0.5, 4, 2, 1, 0)
        assert math.isclose(iou_3d(a, b), 1 / 3, abs_tol=1e-12)
        assert math.isclose(iou_3d(a, b), iou_bev(a, b), abs_tol=1e-12)

    def test_vertical_gap_gives_zero(self):
        a = Pose7DoF(0, 0, 0.5, 4, 2, 1, 0)
        b = Pose7DoF(0, 0, 3.0, 4, 2, 1, 0)
        assert iou_3d(a, b) == 0.0

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(7)
        for i in range(50):
            a, b = _random_pose_pair(rng)
            assert abs(iou_3d(a, b) - mc_iou_3d(a, b, samples=10 ** 5, seed=i)) < 0.01


class TestOverlapInvariances:
    @given(dx=st.floats(-20, 20), dy=st.floats(-20, 20),
           dyaw=st.floats(-math.pi, math.pi), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_rigid_transform_invariance(self, dx, dy, dyaw, seed):
        rng = np.random.default_rng(seed)
        a, b = _random_pose_pair(rng)
        cos, sin = math.cos(dyaw), math.sin(dyaw)

        def moved(p: Pose7DoF) -> Pose7DoF:
            return Pose7DoF(cos * p.x - sin * p.y + dx,
                            sin * p.x + cos * p.y + dy,
                            p.z, p.l, p.w, p.h, p.yaw + dyaw)

        assert math.isclose(iou_bev(a, b), iou_bev(moved(a), moved(b)),
                            abs_tol=1e-9)
        assert math.isclose(iou_3d(a, b), iou_3d(moved(a), moved(b)),
                            abs_tol=1e-9)

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a, b = _random_pose_pair(rng)
        assert math.isclose(iou_bev(a, b), iou_bev(b, a), abs_tol=1e-12)
        assert math.isclose(iou_3d(a, b), iou_3d(b, a), abs_tol=1e-12)


def test_footprint_intersection_of_crossing_rectangles():
    # Two 4x2 rectangles crossed at 90 degrees overlap in a 2x2 square.
    a = BevRect(cx=0, cy=0, l=4, w=2, yaw=0)
    b = BevRect(cx=0, cy=0, l=4, w=2, yaw=math.pi / 2)
    assert math.isclose(footprint_intersection_area(a, b), 4.0, abs_tol=1e-12)
