import numpy as np
import pytest

from mvgeo.camera import Camera, CameraExtrinsics, CameraIntrinsics, look_at_camera
from mvgeo.simulator import (
    NoiseSpec,
    RigSpec,
    SceneSpec,
    generate_scene,
    render_detections,
)


@pytest.fixture
def hd_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0,
                            width=1920, height=1080)


@pytest.fixture
def identity_camera(hd_intrinsics) -> Camera:
    return Camera(id="ident",
                  intrinsics=hd_intrinsics,
                  extrinsics=CameraExtrinsics(rotation=np.eye(3),
                                              translation=np.zeros(3)))


@pytest.fixture
def overhead_camera(hd_intrinsics) -> Camera:
    """Camera 10 m above the origin looking straight down."""
    return look_at_camera("overhead", (0.0, 0.0, 10.0), (0.0, 0.0, 0.0),
                          hd_intrinsics)


@pytest.fixture
def corner_camera(hd_intrinsics) -> Camera:
    """A typical pole-mounted intersection camera."""
    return look_at_camera("corner", (-14.0, -3.0, 6.0), (0.0, 0.0, 0.0),
                          hd_intrinsics)


def make_scene(seed: int, vehicles: int = 2, frames: int = 1,
               noise: NoiseSpec = NoiseSpec(), **scene_kwargs):
    """Default-rig scene plus its rendered detections."""
    scene = generate_scene(
        RigSpec(),
        SceneSpec(vehicle_count=vehicles, frame_count=frames, seed=seed,
                  **scene_kwargs))
    return scene, render_detections(scene, noise)


# Rig/scene pairing engineered so constrained DP-means provably recovers
# the grouping with lambda = 6 m despite bottom-center ground-point bias
# (up to the footprint half-diagonal, <= 2.6 m here):
#   - balanced ring placement keeps every vehicle > lambda + bias away
#     from the initial global-mean cluster (no straddle splits),
#   - pairwise vehicle distance >= 2*r*sin(45 deg) ~ 15.6 m keeps
#     cross-vehicle point gaps far above lambda,
#   - same-vehicle point spread (<= footprint diagonal ~ 5.2 m) stays
#     below lambda.
SEPARATED_LAMBDA = 6.0
SEPARATED_RIG = RigSpec(mount_height=10.0, radius=22.0)


def make_separated_scene(seed: int, vehicles: int = 3, frames: int = 1,
                         noise: NoiseSpec = NoiseSpec()):
    scene = generate_scene(
        SEPARATED_RIG,
        SceneSpec(vehicle_count=vehicles, frame_count=frames, seed=seed,
                  placement="ring", region_inner_radius=11.0,
                  region_radius=12.0, min_center_distance=13.0,
                  length_range=(3.5, 4.6)))
    return scene, render_detections(scene, noise)


def truth_partition(rendered, frame: int = 0) -> list[list[str]]:
    """Ground-truth grouping as sorted per-cluster (camera, vehicle) sets."""
    groups: dict[str, list] = {}
    for det, vid in zip(rendered.detections[frame], rendered.truth[frame]):
        groups.setdefault(vid, []).append((det.camera_id, vid))
    return sorted(sorted(g) for g in groups.values())
