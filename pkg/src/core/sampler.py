"""Semantic- and geometry-aware sampling of candidate 6-DoF grasps."""

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.transform import Rotation

from core.articulated import Joint, distances_to_joint_axis
from core.config import SamplingConfig
from core.errors import InvalidParameterError
from core.geometry import PointCloud
from core.seeding import as_generator

logger = logging.getLogger(__name__)

GraspLabel = Literal["unlabeled", "success", "failure"]
Provenance = Literal["semantic", "geometric"]

# Above this exponent scores are rescaled by exp(-max) before use.
SAFE_EXPONENT = 30.0
_ROTATION_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class Grasp:
    """
    Gripper pose ``(t, R)``.

    ``R`` columns are the closing axis, the binormal and the approach axis; the
    approach axis points from the gripper into the surface. ``point`` is the
    sampled surface point the grasp was built from.
    """

    t: np.ndarray
    R: np.ndarray
    label: GraspLabel = "unlabeled"
    contact_point_index: int = -1
    provenance: Provenance = "geometric"
    point: np.ndarray | None = None
    failure_reason: str | None = None
    displacement: float | None = None

    def __post_init__(self):
        t = np.array(self.t, dtype=np.float64).reshape(3)
        rotation = np.array(self.R, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > _ROTATION_TOLERANCE:
            raise InvalidParameterError("grasp rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > _ROTATION_TOLERANCE:
            raise InvalidParameterError("grasp rotation is not proper")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "R", rotation)
        if self.point is not None:
            object.__setattr__(
                self, "point", np.array(self.point, dtype=np.float64).reshape(3)
            )

    @property
    def closing_axis(self) -> np.ndarray:
        return self.R[:, 0]

    @property
    def approach(self) -> np.ndarray:
        return self.R[:, 2]

    @property
    def contact_position(self) -> np.ndarray:
        """The surface point the grasp targets (``t`` when unknown)."""
        return self.point if self.point is not None else self.t

    def labeled(
        self, label: GraspLabel, reason: str | None, displacement: float
    ) -> "Grasp":
        return replace(
            self, label=label, failure_reason=reason, displacement=displacement
        )


class GraspRecord(BaseModel):
    """One JSON line of a grasp file."""

    model_config = ConfigDict(extra="forbid")

    t: list[float] = Field(min_length=3, max_length=3)
    R: list[float] = Field(min_length=9, max_length=9, description="row-major")
    label: GraspLabel = "unlabeled"
    contact_index: int = -1
    provenance: Provenance = "geometric"
    point: list[float] | None = None
    failure_reason: str | None = None
    displacement: float | None = None

    @classmethod
    def from_grasp(cls, grasp: Grasp) -> "GraspRecord":
        return cls(
            t=grasp.t.tolist(),
            R=grasp.R.reshape(-1).tolist(),
            label=grasp.label,
            contact_index=grasp.contact_point_index,
            provenance=grasp.provenance,
            point=None if grasp.point is None else grasp.point.tolist(),
            failure_reason=grasp.failure_reason,
            displacement=grasp.displacement,
        )

    def to_grasp(self) -> Grasp:
        return Grasp(
            t=np.asarray(self.t),
            R=np.asarray(self.R).reshape(3, 3),
            label=self.label,
            contact_point_index=self.contact_index,
            provenance=self.provenance,
            point=None if self.point is None else np.asarray(self.point),
            failure_reason=self.failure_reason,
            displacement=self.displacement,
        )


def write_grasps(path: Path, grasps: list[Grasp]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [GraspRecord.from_grasp(g).model_dump_json() for g in grasps]
    _ = path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_grasps(path: Path) -> list[Grasp]:
    grasps = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            grasps.append(GraspRecord.model_validate(json.loads(line)).to_grasp())
    return grasps


def score_points(cloud: PointCloud, joint: Joint, cfg: SamplingConfig) -> np.ndarray:
    """
    Per-point sampling score ``exp((d + c * omega) / tau)``.

    ``d`` is the distance to ``joint``'s axis, so ``joint`` must be expressed
    in the cloud's frame. When the largest exponent exceeds 30 all scores are
    divided by ``exp(max)``; only ratios matter downstream.
    """
    cloud.require("curvature")
    assert cloud.curvature is not None
    d = distances_to_joint_axis(cloud.points, joint)
    exponent = (d + cloud.curvature * cfg.omega) / cfg.tau
    if len(exponent) and float(exponent.max()) > SAFE_EXPONENT:
        exponent = exponent - exponent.max()
    return np.exp(exponent)


def _probabilities(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    total = float(scores.sum())
    if not np.isfinite(total) or total <= 0.0:
        logger.warning("all %d scores are zero; sampling uniformly", len(scores))
        return np.full(len(scores), 1.0 / len(scores))
    return scores / total


def sample_grasp_points(
    cloud: PointCloud,
    scores: np.ndarray,
    n: int,
    cfg: SamplingConfig,
    rng_seed: int | np.random.Generator,
    actionable: np.ndarray | None = None,
) -> np.ndarray:
    """
    Draw ``n`` point indices with probability proportional to ``scores``.

    The first ``ceil(semantic_fraction * n)`` draws are restricted to points
    flagged in ``actionable`` when any exist; the rest use the whole cloud.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if len(cloud) == 0:
        raise InvalidParameterError("cannot sample from an empty cloud")
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) != len(cloud):
        raise InvalidParameterError("scores and cloud differ in length")
    rng = as_generator(rng_seed)

    semantic_idx = np.zeros(0, dtype=np.intp)
    if actionable is not None and np.any(actionable):
        candidates = np.flatnonzero(actionable)
        count = math.ceil(cfg.semantic_fraction * n)
        if count:
            semantic_idx = rng.choice(
                candidates, size=count, p=_probabilities(scores[candidates])
            )
    remaining = n - len(semantic_idx)
    rest = rng.choice(len(cloud), size=remaining, p=_probabilities(scores))
    return np.concatenate([semantic_idx, rest]).astype(np.intp)


def orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``axis`` to a right-handed frame."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def frame_from_axes(closing: np.ndarray, approach: np.ndarray) -> np.ndarray:
    """Rotation with columns (closing, approach x closing, approach)."""
    z = approach / np.linalg.norm(approach)
    x = closing - (closing @ z) * z
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def sample_orientation(
    point: np.ndarray,
    normal: np.ndarray,
    cfg: SamplingConfig,
    rng_seed: int | np.random.Generator,
) -> np.ndarray:
    """
    Approach axis uniform in the cone about ``-normal``, wrist roll uniform.

    Uniform over the spherical cap: ``cos(theta) ~ U(cos(alpha), 1)``.
    """
    rng = as_generator(rng_seed)
    inward = -np.asarray(normal, dtype=np.float64)
    inward /= np.linalg.norm(inward)
    cos_alpha = math.cos(math.radians(cfg.cone_half_angle_deg))
    cos_theta = rng.uniform(cos_alpha, 1.0)
    sin_theta = math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    u, v = orthonormal_basis(inward)
    approach = cos_theta * inward + sin_theta * (math.cos(phi) * u + math.sin(phi) * v)
    approach /= np.linalg.norm(approach)

    roll = rng.uniform(0.0, 2.0 * math.pi)
    a, b = orthonormal_basis(approach)
    closing = math.cos(roll) * a + math.sin(roll) * b
    return frame_from_axes(closing, approach)


def canonical_sign(vector: np.ndarray) -> np.ndarray:
    """Flip ``vector`` so its largest-magnitude component is positive."""
    return vector if vector[int(np.argmax(np.abs(vector)))] >= 0 else -vector


def minor_in_plane_axis(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Direction of least spread of ``points`` within the plane normal to ``normal``."""
    u, v = orthonormal_basis(normal / np.linalg.norm(normal))
    if len(points) < 2:
        return u
    centered = points - points.mean(axis=0)
    planar = np.column_stack([centered @ u, centered @ v])
    _, eigenvectors = np.linalg.eigh(planar.T @ planar)
    minor = eigenvectors[0, 0] * u + eigenvectors[1, 0] * v
    return canonical_sign(minor / np.linalg.norm(minor))


def semantic_orientation(
    normal: np.ndarray,
    part_points: np.ndarray,
    cfg: SamplingConfig,
    rng_seed: int | np.random.Generator,
) -> np.ndarray:
    """
    Approach along ``-normal`` with the closing axis across the part's minor
    in-plane axis, then perturbed by a random rotation of bounded angle.
    """
    rng = as_generator(rng_seed)
    approach = -np.asarray(normal, dtype=np.float64)
    approach /= np.linalg.norm(approach)
    closing = minor_in_plane_axis(part_points, approach)
    base = frame_from_axes(closing, approach)

    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    angle = math.radians(rng.uniform(0.0, cfg.semantic_perturbation_deg))
    perturbation = Rotation.from_rotvec(direction * angle).as_matrix()
    return frame_from_axes(perturbation @ base[:, 0], perturbation @ base[:, 2])


def compose_candidates(
    cloud: PointCloud,
    joint: Joint,
    n: int,
    cfg: SamplingConfig,
    rng_seed: int | np.random.Generator,
    actionable: np.ndarray | None = None,
) -> list[Grasp]:
    """
    ``n`` unlabeled candidates on ``cloud``.

    Semantic draws (on ``actionable`` points) use the part-aligned orientation,
    the others a cone sample about the surface normal. Each grasp origin sits
    behind its surface point along the approach by a sampled standoff.
    """
    if n == 0:
        return []
    cloud.require("normals", "curvature")
    assert cloud.normals is not None
    rng = as_generator(rng_seed)
    scores = score_points(cloud, joint, cfg)
    indices = sample_grasp_points(cloud, scores, n, cfg, rng, actionable)
    n_semantic = 0
    if actionable is not None and np.any(actionable):
        n_semantic = math.ceil(cfg.semantic_fraction * n)

    grasps: list[Grasp] = []
    for draw, index in enumerate(indices):
        point = cloud.points[index]
        normal = cloud.normals[index]
        if draw < n_semantic:
            assert actionable is not None
            same_part = actionable
            if cloud.link_id is not None:
                same_part = actionable & (cloud.link_id == cloud.link_id[index])
            rotation = semantic_orientation(normal, cloud.points[same_part], cfg, rng)
            provenance: Provenance = "semantic"
        else:
            rotation = sample_orientation(point, normal, cfg, rng)
            provenance = "geometric"
        standoff = rng.uniform(*cfg.standoff_range)
        grasps.append(
            Grasp(
                t=point - standoff * rotation[:, 2],
                R=rotation,
                contact_point_index=int(index),
                provenance=provenance,
                point=point,
            )
        )
    return grasps
