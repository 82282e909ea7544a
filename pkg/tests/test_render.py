import json
import math
from pathlib import Path

import numpy as np
import pytest

from core.articulated import ArticulatedObject, JointState, parse_object
from core.config import RenderConfig, ViewpointRange
from core.errors import DatasetError, InvalidParameterError, NotVisibleError
from core.geometry import PointCloud
from core.mesh import box_mesh, closest_points_on_triangles
from core.render import (
    Camera,
    CameraRecord,
    CorrespondenceSet,
    ViewSidecar,
    cast_camera_rays,
    decode_correspondences,
    encode_correspondences,
    extract_correspondences,
    load_correspondences,
    read_sidecar,
    render_partial_cloud,
    sample_viewpoints,
    save_correspondences,
    to_camera_frame,
    write_sidecar,
)


@pytest.fixture
def cube() -> ArticulatedObject:
    vertices, triangles = box_mesh(np.zeros(3), np.full(3, 0.5))
    document = {
        "name": "cube",
        "links": [
            {
                "name": "cube",
                "tag": "base",
                "vertices": vertices.tolist(),
                "triangles": triangles.tolist(),
            }
        ],
    }
    return parse_object(json.dumps(document))


def camera_at(position, look_at=(0.0, 0.0, 0.0)) -> Camera:
    return Camera(
        position=np.asarray(position, dtype=np.float64),
        look_at=np.asarray(look_at, dtype=np.float64),
        up=np.array([0.0, 0.0, 1.0]),
    )


@pytest.mark.parametrize(
    ("position", "up"),
    [
        pytest.param((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), id="position-at-target"),
        pytest.param((0.0, 0.0, 3.0), (0.0, 0.0, 1.0), id="up-parallel-to-view"),
    ],
)
def test_degenerate_cameras_are_rejected(position, up):
    with pytest.raises(InvalidParameterError):
        _ = Camera(position=np.array(position), look_at=np.zeros(3), up=np.array(up))


def test_hits_reproject_onto_their_pixels(cube: ArticulatedObject):
    # Arrange
    cam = camera_at((3.0, 0.4, 0.7))

    # Act
    hits = cast_camera_rays(cube, JointState.closed(cube), cam)
    projected = cam.project(hits.points)

    # Assert
    assert len(hits) > 0
    expected = np.column_stack([hits.pixels // cam.width, hits.pixels % cam.width])
    assert np.max(np.abs(projected - expected)) < 0.5


def test_front_view_of_a_cube_sees_only_its_front_face(cube: ArticulatedObject):
    # Act
    cloud = render_partial_cloud(cube, JointState.closed(cube), camera_at((3, 0, 0)))

    # Assert
    assert len(cloud) > 0
    assert cloud.frame == "world"
    np.testing.assert_allclose(cloud.points[:, 0], 0.5, atol=1e-9)
    assert cloud.normals is not None
    np.testing.assert_allclose(
        cloud.normals, np.tile([1.0, 0.0, 0.0], (len(cloud), 1)), atol=1e-6
    )


def test_points_lie_on_their_recorded_triangles(cube: ArticulatedObject):
    # Arrange
    cam = camera_at((2.5, -1.2, 1.4))

    # Act
    cloud = render_partial_cloud(cube, JointState.closed(cube), cam)

    # Assert
    corners = cube.link("cube").corners
    assert cloud.triangle_id is not None
    for point, triangle in zip(cloud.points, cloud.triangle_id, strict=True):
        _, distance = closest_points_on_triangles(point, corners[[triangle]])
        assert distance[0] < 1e-6


def test_large_renders_are_reduced_to_max_points(cube: ArticulatedObject):
    # Act
    cloud = render_partial_cloud(
        cube, JointState.closed(cube), camera_at((3, 0, 0)), max_points=100
    )

    # Assert
    assert len(cloud) == 100


def test_depth_noise_is_reproducible(cube: ArticulatedObject):
    # Arrange
    state = JointState.closed(cube)
    cam = camera_at((3, 0, 0))

    # Act
    first = render_partial_cloud(cube, state, cam, depth_noise_std=0.002, rng_seed=5)
    second = render_partial_cloud(cube, state, cam, depth_noise_std=0.002, rng_seed=5)

    # Assert
    np.testing.assert_array_equal(first.points, second.points)
    assert not np.allclose(first.points[:, 0], 0.5)


def test_camera_looking_away_sees_nothing(cube: ArticulatedObject):
    with pytest.raises(NotVisibleError):
        _ = render_partial_cloud(
            cube, JointState.closed(cube), camera_at((3, 0, 0), look_at=(6, 0, 0))
        )


def test_zero_spans_give_identical_cameras():
    # Arrange
    viewpoints = ViewpointRange(
        yaw_span_deg=0.0, pitch_span_deg=0.0, distance_range=(1.5, 1.5)
    )

    # Act
    cameras = sample_viewpoints(viewpoints, 5, rng_seed=3)

    # Assert
    for cam in cameras:
        np.testing.assert_allclose(cam.position, cameras[0].position)
    _, pitch, distance = cameras[0].angles()
    assert distance == pytest.approx(1.5)
    assert pitch == pytest.approx(20.0)


def test_sampled_yaw_stays_inside_its_span():
    # Arrange
    viewpoints = ViewpointRange(yaw_span_deg=120.0)

    # Act
    cameras = sample_viewpoints(
        viewpoints, 10000, rng_seed=0, render=RenderConfig(width=8, height=6)
    )

    # Assert
    yaws = np.array([cam.angles()[0] for cam in cameras])
    assert -60.0 <= yaws.min() <= -58.0
    assert 58.0 <= yaws.max() <= 60.0


def test_viewpoints_are_deterministic():
    # Act
    first = sample_viewpoints(ViewpointRange(), 4, rng_seed=11)
    second = sample_viewpoints(ViewpointRange(), 4, rng_seed=11)

    # Assert
    for a, b in zip(first, second, strict=True):
        np.testing.assert_array_equal(a.position, b.position)


def test_viewpoints_need_at_least_one_camera():
    with pytest.raises(InvalidParameterError):
        _ = sample_viewpoints(ViewpointRange(), 0, rng_seed=0)


def test_camera_frame_puts_the_target_on_the_optical_axis():
    # Arrange
    cam = camera_at((3, 0, 0))
    cloud = PointCloud(points=np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))

    # Act
    local = to_camera_frame(cloud, cam)

    # Assert
    assert local.frame == "camera"
    np.testing.assert_allclose(local.points[0], [0.0, 0.0, 3.0], atol=1e-12)
    # camera y points down
    assert local.points[1, 1] < 0


def test_identical_views_match_every_point_to_itself(cube: ArticulatedObject):
    # Arrange
    cloud = render_partial_cloud(cube, JointState.closed(cube), camera_at((3, 1, 1)))

    # Act
    matches = extract_correspondences(cloud, cloud)

    # Assert
    expected = np.column_stack([np.arange(len(cloud)), np.arange(len(cloud))])
    np.testing.assert_array_equal(matches.pairs, expected)


def test_views_of_opposite_faces_share_no_points(cube: ArticulatedObject):
    # Arrange
    state = JointState.closed(cube)
    front = render_partial_cloud(cube, state, camera_at((3, 0, 0)))
    back = render_partial_cloud(cube, state, camera_at((-3, 0, 0)))

    # Act
    matches = extract_correspondences(front, back)

    # Assert
    assert len(matches) == 0


def test_swapping_views_transposes_the_pairs(cube: ArticulatedObject):
    # Arrange
    state = JointState.closed(cube)
    left = render_partial_cloud(cube, state, camera_at((2.8, 1.0, 0.6)))
    right = render_partial_cloud(cube, state, camera_at((2.8, -1.0, 0.9)))

    # Act
    forward = extract_correspondences(left, right, epsilon=0.05)
    backward = extract_correspondences(right, left, epsilon=0.05)

    # Assert
    assert len(forward) > 0
    np.testing.assert_array_equal(forward.swapped().pairs, backward.pairs)


def test_camera_frame_clouds_cannot_be_matched(cube: ArticulatedObject):
    # Arrange
    cam = camera_at((3, 0, 0))
    cloud = render_partial_cloud(cube, JointState.closed(cube), cam)

    # Act / Assert
    with pytest.raises(InvalidParameterError):
        _ = extract_correspondences(to_camera_frame(cloud, cam), cloud)


def test_correspondences_survive_a_file_round_trip(tmp_path: Path):
    # Arrange
    pairs = CorrespondenceSet(pairs=np.array([[0, 3], [2, 1], [5, 5]]), state_id=2)

    # Act
    save_correspondences(tmp_path / "pairs.aocr", pairs)
    loaded = load_correspondences(tmp_path / "pairs.aocr", state_id=2)

    # Assert
    np.testing.assert_array_equal(loaded.pairs, pairs.pairs)
    assert loaded.state_id == 2


@pytest.mark.parametrize(
    "data",
    [
        pytest.param(b"AOC", id="short-header"),
        pytest.param(b"XXXX" + (0).to_bytes(4, "little"), id="bad-magic"),
        pytest.param(b"AOCR" + (2).to_bytes(4, "little") + b"\0" * 8, id="short"),
    ],
)
def test_malformed_correspondence_files_are_rejected(data: bytes):
    with pytest.raises(DatasetError):
        _ = decode_correspondences(data)


def test_empty_correspondence_set_encodes_to_a_header():
    assert encode_correspondences(CorrespondenceSet(pairs=np.zeros((0, 2)))) == (
        b"AOCR" + (0).to_bytes(4, "little")
    )


def test_sidecar_is_written_next_to_the_cloud(tmp_path: Path):
    # Arrange
    cloud_path = tmp_path / "view_00.aopc"
    cam = camera_at((3, 0, 1))
    sidecar = ViewSidecar(
        camera=CameraRecord.from_camera(cam),
        joint_state={"hinge": 0.5},
        state_id=1,
        view_id=0,
    )

    # Act
    missing = read_sidecar(cloud_path)
    write_sidecar(cloud_path, sidecar)
    loaded = read_sidecar(cloud_path)

    # Assert
    assert missing is None
    assert loaded == sidecar
    assert (tmp_path / "view_00.json").is_file()
    assert loaded is not None
    restored = loaded.camera.to_camera()
    np.testing.assert_allclose(restored.position, cam.position)
    assert restored.fov == pytest.approx(math.radians(60.0))
