"""
Ranked 6-DoF grasp proposals from per-point scores.

Orientations come from an external provider through an :class:`OrientationTable`
file (JSON lines ``{"p": [x, y, z], "q": [w, x, y, z], "conf": c}``); each
cloud point takes the rotation of its nearest table point. Without a table a
geometric orientation is derived from the local surface.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.transform import Rotation

from core.errors import EmptyInputError, InvalidParameterError
from core.geometry import PointCloud, SpatialIndex
from core.sampler import Grasp, frame_from_axes, minor_in_plane_axis

logger = logging.getLogger(__name__)

OrientationSource = Literal["provider", "geometric_fallback"]

QUATERNION_TOLERANCE = 1e-6
FALLBACK_NEIGHBORS = 20


class OrientationRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    p: list[float] = Field(min_length=3, max_length=3)
    q: list[float] = Field(min_length=4, max_length=4, description="w, x, y, z")
    conf: float = 1.0


@dataclass(frozen=True, eq=False)
class OrientationTable:
    points: np.ndarray
    quaternions: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        quaternions = np.asarray(self.quaternions, dtype=np.float64).reshape(-1, 4)
        confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not len(points) == len(quaternions) == len(confidence):
            raise InvalidParameterError("orientation table columns differ in length")
        norms = np.linalg.norm(quaternions, axis=1)
        if len(norms) and np.max(np.abs(norms - 1.0)) > QUATERNION_TOLERANCE:
            raise InvalidParameterError("orientation quaternions must be unit norm")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "quaternions", quaternions)
        object.__setattr__(self, "confidence", confidence)

    def __len__(self) -> int:
        return len(self.points)

    def rotations(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros((0, 3, 3))
        return Rotation.from_quat(self.quaternions, scalar_first=True).as_matrix()

    @classmethod
    def from_rotations(
        cls,
        points: np.ndarray,
        rotations: np.ndarray,
        confidence: np.ndarray | None = None,
    ) -> "OrientationTable":
        quaternions = Rotation.from_matrix(rotations).as_quat(scalar_first=True)
        if confidence is None:
            confidence = np.ones(len(points))
        return cls(points=points, quaternions=quaternions, confidence=confidence)


def read_orientation_table(path: Path) -> OrientationTable:
    records = [
        OrientationRecord.model_validate(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return OrientationTable(
        points=np.reshape([r.p for r in records], (-1, 3)),
        quaternions=np.reshape([r.q for r in records], (-1, 4)),
        confidence=np.asarray([r.conf for r in records]),
    )


def write_orientation_table(path: Path, table: OrientationTable) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = zip(table.points, table.quaternions, table.confidence, strict=True)
    lines = [
        OrientationRecord(p=p.tolist(), q=q.tolist(), conf=float(c)).model_dump_json()
        for p, q, c in rows
    ]
    _ = path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def assign_orientations(
    cloud: PointCloud, table: OrientationTable
) -> tuple[np.ndarray, np.ndarray]:
    """
    Rotation of the nearest table point for every cloud point.

    Returns:
        Rotations (n, 3, 3) and the table row each was taken from.
    """
    if len(table) == 0:
        raise EmptyInputError("empty orientation table")
    if len(cloud) == 0:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.intp)
    idx, _ = SpatialIndex(table.points).knn_many(cloud.points, 1)
    rows = idx[:, 0]
    return table.rotations()[rows], rows


def geometric_fallback_orientation(
    cloud: PointCloud, k_nbrs: int = FALLBACK_NEIGHBORS
) -> np.ndarray:
    """
    Approach along ``-normal``; closing axis along the minor in-plane axis of
    each point's ``k_nbrs`` neighbourhood.
    """
    cloud.require("normals")
    assert cloud.normals is not None
    if len(cloud) == 0:
        return np.zeros((0, 3, 3))
    idx, _ = SpatialIndex(cloud.points).knn_many(cloud.points, k_nbrs)
    rotations = np.empty((len(cloud), 3, 3))
    for i, normal in enumerate(cloud.normals):
        approach = -normal
        closing = minor_in_plane_axis(cloud.points[idx[i]], approach)
        rotations[i] = frame_from_axes(closing, approach)
    return rotations


@dataclass(frozen=True, eq=False)
class GraspProposal:
    grasp: Grasp
    score: float
    rank: int
    source: OrientationSource
    point_index: int


def _suppressed(points: np.ndarray, kept: list[int], index: int, radius: float) -> bool:
    if not kept:
        return False
    return bool(np.min(np.linalg.norm(points[kept] - points[index], axis=1)) < radius)


def top_k_proposals(
    cloud: PointCloud,
    scores: np.ndarray,
    rotations: np.ndarray,
    k: int,
    source: OrientationSource = "provider",
    nms_radius: float | None = None,
) -> list[GraspProposal]:
    """
    The ``k`` highest-scoring points as grasps, rank 1 first.

    Ties go to the lower point index. With ``nms_radius`` a point closer than
    that to an already selected proposal is skipped.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    if not len(cloud) == len(scores) == len(rotations):
        raise InvalidParameterError("cloud, scores and rotations must align")
    if k > len(cloud):
        logger.warning("k=%d exceeds the cloud size %d", k, len(cloud))

    order = np.lexsort((np.arange(len(scores)), -scores))
    kept: list[int] = []
    for index in order:
        if len(kept) == k:
            break
        if nms_radius is not None and _suppressed(
            cloud.points, kept, int(index), nms_radius
        ):
            continue
        kept.append(int(index))

    return [
        GraspProposal(
            grasp=Grasp(
                t=cloud.points[index],
                R=rotations[index],
                contact_point_index=index,
                point=cloud.points[index],
            ),
            score=float(scores[index]),
            rank=rank,
            source=source,
            point_index=index,
        )
        for rank, index in enumerate(kept, start=1)
    ]


def propose_grasps(
    cloud: PointCloud,
    scores: np.ndarray,
    k: int,
    table: OrientationTable | None = None,
    nms_radius: float | None = None,
) -> list[GraspProposal]:
    """Orient from ``table`` when it has entries, otherwise geometrically."""
    if table is not None and len(table):
        rotations, _ = assign_orientations(cloud, table)
        source: OrientationSource = "provider"
    else:
        if table is not None:
            logger.warning("orientation table is empty, using geometric fallback")
        rotations = geometric_fallback_orientation(cloud)
        source = "geometric_fallback"
    return top_k_proposals(cloud, scores, rotations, k, source, nms_radius)


class ProposalRecord(BaseModel):
    """One JSON line of a proposal file; ``q`` is (w, x, y, z)."""

    model_config = ConfigDict(extra="forbid")

    rank: int
    score: float
    source: OrientationSource
    point_index: int
    t: list[float]
    q: list[float]

    @classmethod
    def from_proposal(cls, proposal: GraspProposal) -> "ProposalRecord":
        q = Rotation.from_matrix(proposal.grasp.R).as_quat(scalar_first=True)
        return cls(
            rank=proposal.rank,
            score=proposal.score,
            source=proposal.source,
            point_index=proposal.point_index,
            t=proposal.grasp.t.tolist(),
            q=q.tolist(),
        )


def write_proposals(path: Path, proposals: list[GraspProposal]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [ProposalRecord.from_proposal(p).model_dump_json() for p in proposals]
    _ = path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_proposals(path: Path) -> list[ProposalRecord]:
    return [
        ProposalRecord.model_validate(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
