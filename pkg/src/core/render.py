"""
Ray-cast depth rendering of posed objects and cross-view correspondences.

Pixels are cast row-major from the top-left corner; every output array keeps
that order. Camera-frame coordinates follow the pinhole convention: x right,
y down, z forward.
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.articulated import ArticulatedObject, JointState
from core.collision import PosedScene
from core.config import RenderConfig, ViewpointRange
from core.errors import DatasetError, InvalidParameterError, NotVisibleError
from core.geometry import (
    PointCloud,
    SpatialIndex,
    estimate_normals_curvature,
    farthest_point_sample,
    rigid_transform_cloud,
)
from core.mesh import ray_triangle_hits
from core.seeding import as_generator

logger = logging.getLogger(__name__)

CORRESPONDENCE_MAGIC = b"AOCR"
_CORRESPONDENCE_HEADER = struct.Struct("<4sI")


@dataclass(frozen=True, eq=False)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    width: int = 160
    height: int = 120
    fov: float = math.radians(60.0)

    def __post_init__(self):
        for name in ("position", "look_at", "up"):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            object.__setattr__(self, name, value)
        if np.allclose(self.position, self.look_at):
            raise InvalidParameterError("camera position equals look_at")
        if not 0.0 < self.fov < math.pi:
            raise InvalidParameterError(f"fov {self.fov} outside (0, pi)")
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("image size must be positive")
        forward = self.look_at - self.position
        if np.linalg.norm(np.cross(forward, self.up)) < 1e-12:
            raise InvalidParameterError("camera up hint is parallel to the view")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit (right, up, forward) vectors in the world frame."""
        forward = self.look_at - self.position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, self.up)
        right /= np.linalg.norm(right)
        return right, np.cross(right, forward), forward

    @property
    def focal(self) -> float:
        return (self.height / 2) / math.tan(self.fov / 2)

    def pixel_rays(self) -> np.ndarray:
        """Unit ray directions through every pixel centre, row-major (h*w, 3)."""
        right, up, forward = self.basis()
        cols = np.arange(self.width) + 0.5 - self.width / 2
        rows = np.arange(self.height) + 0.5 - self.height / 2
        x, y = np.meshgrid(cols, rows)
        directions = (
            forward * self.focal
            + x.reshape(-1, 1) * right
            - y.reshape(-1, 1) * up
        )
        return directions / np.linalg.norm(directions, axis=1, keepdims=True)

    def project(self, points: np.ndarray) -> np.ndarray:
        """(row, col) pixel coordinates; pixel centres sit at integer values."""
        right, up, forward = self.basis()
        offset = np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.position
        depth = offset @ forward
        col = self.focal * (offset @ right) / depth + self.width / 2 - 0.5
        row = -self.focal * (offset @ up) / depth + self.height / 2 - 0.5
        return np.column_stack([row, col])

    def world_to_camera(self) -> tuple[np.ndarray, np.ndarray]:
        """Rotation and translation taking world points to camera coordinates."""
        right, up, forward = self.basis()
        rotation = np.vstack([right, -up, forward])
        return rotation, -rotation @ self.position

    def angles(self) -> tuple[float, float, float]:
        """Yaw and pitch (degrees) of the camera about its target, and distance."""
        offset = self.position - self.look_at
        distance = float(np.linalg.norm(offset))
        yaw = math.degrees(math.atan2(offset[1], offset[0]))
        pitch = math.degrees(math.asin(float(np.clip(offset[2] / distance, -1, 1))))
        return yaw, pitch, distance


class CameraRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    width: int
    height: int
    fov: float

    @classmethod
    def from_camera(cls, camera: Camera) -> "CameraRecord":
        return cls(
            position=tuple(camera.position.tolist()),
            look_at=tuple(camera.look_at.tolist()),
            up=tuple(camera.up.tolist()),
            width=camera.width,
            height=camera.height,
            fov=camera.fov,
        )

    def to_camera(self) -> Camera:
        return Camera(
            position=np.asarray(self.position),
            look_at=np.asarray(self.look_at),
            up=np.asarray(self.up),
            width=self.width,
            height=self.height,
            fov=self.fov,
        )


def object_center(obj: ArticulatedObject, state: JointState) -> np.ndarray:
    """Centre of the posed object's bounding box."""
    scene = PosedScene(obj, state)
    corners = np.concatenate([c.reshape(-1, 3) for c in scene.corners.values()])
    return (corners.min(axis=0) + corners.max(axis=0)) / 2


def sample_viewpoints(
    viewpoints: ViewpointRange,
    n: int,
    rng_seed: int | np.random.Generator,
    target: np.ndarray | None = None,
    render: RenderConfig | None = None,
) -> list[Camera]:
    """
    ``n`` cameras looking at ``target`` from around the object's front (+x).

    Yaw and pitch offsets are uniform over the configured spans; pitch is
    centred on ``elevation_deg``.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    rng = as_generator(rng_seed)
    render = render or RenderConfig()
    center = np.zeros(3) if target is None else np.asarray(target, dtype=np.float64)
    low, high = viewpoints.distance_range
    half_yaw = viewpoints.yaw_span_deg / 2
    half_pitch = viewpoints.pitch_span_deg / 2
    cameras = []
    for _ in range(n):
        yaw = math.radians(rng.uniform(-half_yaw, half_yaw))
        pitch = math.radians(
            viewpoints.elevation_deg + rng.uniform(-half_pitch, half_pitch)
        )
        distance = rng.uniform(low, high)
        direction = np.array(
            [
                math.cos(pitch) * math.cos(yaw),
                math.cos(pitch) * math.sin(yaw),
                math.sin(pitch),
            ]
        )
        cameras.append(
            Camera(
                position=center + distance * direction,
                look_at=center,
                up=np.array([0.0, 0.0, 1.0]),
                width=render.width,
                height=render.height,
                fov=math.radians(render.fov_deg),
            )
        )
    return cameras


@dataclass(frozen=True, eq=False)
class RayHits:
    """Nearest hits of the pixels that see the object, in pixel order."""

    points: np.ndarray
    pixels: np.ndarray
    link_id: np.ndarray
    triangle_id: np.ndarray
    barycentric: np.ndarray
    depth: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def cast_camera_rays(
    obj: ArticulatedObject, state: JointState, cam: Camera
) -> RayHits:
    """
    One primary ray per pixel through the posed meshes.

    ``triangle_id`` indexes the posed scene's triangles concatenated in link
    order.
    """
    scene = PosedScene(obj, state)
    corners = np.concatenate([scene.corners[name] for name in obj.link_names])
    link_of_triangle = np.concatenate(
        [
            np.full(len(scene.corners[name]), i, dtype=np.int64)
            for i, name in enumerate(obj.link_names)
        ]
    )
    directions = cam.pixel_rays()
    depth, triangle, uv = ray_triangle_hits(cam.position, directions, corners)
    hit = np.flatnonzero(triangle >= 0)
    return RayHits(
        points=cam.position + depth[hit, None] * directions[hit],
        pixels=hit,
        link_id=link_of_triangle[triangle[hit]],
        triangle_id=triangle[hit],
        barycentric=uv[hit],
        depth=depth[hit],
    )


def render_partial_cloud(
    obj: ArticulatedObject,
    state: JointState,
    cam: Camera,
    max_points: int = 4096,
    k_nbrs: int = 20,
    depth_noise_std: float = 0.0,
    rng_seed: int | np.random.Generator = 0,
) -> PointCloud:
    """
    World-frame partial cloud of ``obj`` seen from ``cam``.

    More than ``max_points`` hits are reduced by farthest point sampling from
    the first hit; the kept points stay in pixel order. Normals face the
    camera. Depth noise moves points along their rays and leaves the surface
    ids untouched.
    """
    obj.validate_state(state)
    hits = cast_camera_rays(obj, state, cam)
    if len(hits) == 0:
        raise NotVisibleError()

    points = hits.points
    if depth_noise_std > 0:
        rng = as_generator(rng_seed)
        noisy = hits.depth + rng.normal(0.0, depth_noise_std, size=len(hits))
        rays = (points - cam.position) / hits.depth[:, None]
        points = cam.position + noisy[:, None] * rays

    cloud = PointCloud(
        points=points,
        link_id=hits.link_id,
        triangle_id=hits.triangle_id,
        barycentric=hits.barycentric,
    )
    if len(cloud) > max_points:
        keep = np.sort(farthest_point_sample(cloud, max_points, seed_index=0))
        cloud = cloud.subset(keep)
    cloud, degenerate = estimate_normals_curvature(cloud, k_nbrs, cam.position)
    logger.debug(
        "rendered %d hits into %d points (%d degenerate)",
        len(hits),
        len(cloud),
        degenerate,
    )
    return cloud


def to_camera_frame(cloud: PointCloud, cam: Camera) -> PointCloud:
    if cloud.frame == "camera":
        return cloud
    rotation, translation = cam.world_to_camera()
    return rigid_transform_cloud(cloud, rotation, translation, "camera")


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Index pairs (into view A, into view B) of matching points."""

    pairs: np.ndarray
    state_id: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        )

    def __len__(self) -> int:
        return len(self.pairs)

    def swapped(self) -> "CorrespondenceSet":
        pairs = self.pairs[:, ::-1]
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return CorrespondenceSet(pairs=pairs[order], state_id=self.state_id)


def extract_correspondences(
    view_a: PointCloud, view_b: PointCloud, epsilon: float = 0.005, state_id: int = 0
) -> CorrespondenceSet:
    """
    Mutual nearest neighbours on the same link closer than ``epsilon``.

    Both views must be world-frame renders of the same joint state. Pairs are
    ordered by their index in view A.
    """
    view_a.require("link_id")
    view_b.require("link_id")
    assert view_a.link_id is not None and view_b.link_id is not None
    if view_a.frame != "world" or view_b.frame != "world":
        raise InvalidParameterError("correspondences need world-frame clouds")
    if len(view_a) == 0 or len(view_b) == 0:
        return CorrespondenceSet(pairs=np.zeros((0, 2)), state_id=state_id)

    a_to_b, distances = SpatialIndex(view_b.points).knn_many(view_a.points, 1)
    b_to_a, _ = SpatialIndex(view_a.points).knn_many(view_b.points, 1)
    a_to_b, distances, b_to_a = a_to_b[:, 0], distances[:, 0], b_to_a[:, 0]
    a_index = np.arange(len(view_a))
    keep = (
        (distances < epsilon)
        & (b_to_a[a_to_b] == a_index)
        & (view_a.link_id == view_b.link_id[a_to_b])
    )
    pairs = np.column_stack([a_index[keep], a_to_b[keep]])
    return CorrespondenceSet(pairs=pairs, state_id=state_id)


def encode_correspondences(pairs: CorrespondenceSet) -> bytes:
    header = _CORRESPONDENCE_HEADER.pack(CORRESPONDENCE_MAGIC, len(pairs))
    return header + pairs.pairs.astype("<u4").tobytes()


def decode_correspondences(data: bytes, state_id: int = 0) -> CorrespondenceSet:
    if len(data) < _CORRESPONDENCE_HEADER.size:
        raise DatasetError("truncated AOCR header")
    magic, count = _CORRESPONDENCE_HEADER.unpack_from(data, 0)
    if magic != CORRESPONDENCE_MAGIC:
        raise DatasetError(f"bad AOCR magic {magic!r}")
    expected = _CORRESPONDENCE_HEADER.size + 8 * count
    if len(data) < expected:
        raise DatasetError("truncated AOCR payload")
    pairs = np.frombuffer(
        data, dtype="<u4", count=2 * count, offset=_CORRESPONDENCE_HEADER.size
    )
    return CorrespondenceSet(pairs=pairs.astype(np.int64), state_id=state_id)


def save_correspondences(path: Path, pairs: CorrespondenceSet) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_bytes(encode_correspondences(pairs))


def load_correspondences(path: Path, state_id: int = 0) -> CorrespondenceSet:
    return decode_correspondences(path.read_bytes(), state_id)


class ViewSidecar(BaseModel):
    """JSON sidecar written next to every rendered cloud."""

    model_config = ConfigDict(extra="forbid")

    camera: CameraRecord
    joint_state: dict[str, float]
    state_id: int
    view_id: int


def sidecar_path(cloud_path: Path) -> Path:
    return cloud_path.with_suffix(".json")


def write_sidecar(cloud_path: Path, sidecar: ViewSidecar) -> None:
    _ = sidecar_path(cloud_path).write_text(
        sidecar.model_dump_json(indent=1) + "\n", encoding="utf-8"
    )


def read_sidecar(cloud_path: Path) -> ViewSidecar | None:
    path = sidecar_path(cloud_path)
    if not path.is_file():
        return None
    return ViewSidecar.model_validate_json(path.read_text(encoding="utf-8"))
