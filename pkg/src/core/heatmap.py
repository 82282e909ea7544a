"""
Dense pseudo-ground-truth heatmaps from sparse grasp labels.

For a cloud point ``p`` the heat is the clipped mean contribution of its ``k``
nearest labeled points (either polarity), always divided by ``k``. Positives
contribute ``1 - (lambda_pos / r) * d`` and negatives ``lambda_neg * (1 - d / r)``;
both are floored at zero. A point whose nearest positive lies farther than ``r``
gets zero heat.
"""

import logging
import struct
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.config import HeatmapConfig
from core.errors import DatasetError, InvalidParameterError, NoLabelsError
from core.geometry import PointCloud, SpatialIndex, point_distances
from core.sampler import Grasp

logger = logging.getLogger(__name__)

HEATMAP_MAGIC = b"AOHM"
_HEADER = struct.Struct("<4sI")


@dataclass(frozen=True, eq=False)
class SparseLabels:
    """Labeled contact points; polarity +1 marks a success and -1 a failure."""

    points: np.ndarray
    polarity: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        polarity = np.asarray(self.polarity, dtype=np.int64).reshape(-1)
        if len(points) != len(polarity):
            raise InvalidParameterError(
                f"{len(points)} label points but {len(polarity)} polarities"
            )
        if not np.all(np.isfinite(points)):
            raise InvalidParameterError("label positions must be finite")
        if not np.all(np.isin(polarity, (-1, 1))):
            raise InvalidParameterError("polarity must be +1 or -1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "polarity", polarity)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def positives(self) -> np.ndarray:
        return self.points[self.polarity > 0]

    @classmethod
    def from_grasps(cls, grasps: Iterable[Grasp]) -> "SparseLabels":
        """Contact points of labeled grasps; unlabeled grasps are skipped."""
        points, polarity = [], []
        for grasp in grasps:
            if grasp.label == "unlabeled":
                continue
            points.append(grasp.contact_position)
            polarity.append(1 if grasp.label == "success" else -1)
        return cls(points=np.reshape(points, (-1, 3)), polarity=np.asarray(polarity))


@dataclass(frozen=True, eq=False)
class HeatmapLabels:
    values: np.ndarray

    def __post_init__(self):
        values = np.clip(np.asarray(self.values, dtype=np.float64).reshape(-1), 0, 1)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def _contributions(
    distances: np.ndarray, polarity: np.ndarray, cfg: HeatmapConfig
) -> np.ndarray:
    positive = 1.0 - (cfg.lambda_pos / cfg.r) * distances
    negative = cfg.lambda_neg * (1.0 - distances / cfg.r)
    weights = np.where(polarity > 0, positive, negative)
    return np.maximum(weights, 0.0)


def _heat(
    neighbour_distances: np.ndarray,
    neighbour_polarity: np.ndarray,
    nearest_positive: np.ndarray,
    cfg: HeatmapConfig,
) -> np.ndarray:
    weights = _contributions(neighbour_distances, neighbour_polarity, cfg)
    heat = np.minimum(1.0, weights.sum(axis=1) / cfg.k)
    return np.where(nearest_positive > cfg.r, 0.0, heat)


def _check(cloud: PointCloud, labels: SparseLabels) -> None:
    if len(labels) == 0:
        raise NoLabelsError()
    if len(cloud) == 0:
        raise InvalidParameterError("cannot densify onto an empty cloud")


def densify(
    cloud: PointCloud, labels: SparseLabels, cfg: HeatmapConfig
) -> HeatmapLabels:
    _check(cloud, labels)
    positives = labels.positives
    if len(positives) == 0:
        return HeatmapLabels(values=np.zeros(len(cloud)))

    _, nearest = SpatialIndex(positives).knn_many(cloud.points, 1)
    idx, distances = SpatialIndex(labels.points).knn_many(cloud.points, cfg.k)
    return HeatmapLabels(
        values=_heat(distances, labels.polarity[idx], nearest[:, 0], cfg)
    )


def densify_bruteforce(
    cloud: PointCloud, labels: SparseLabels, cfg: HeatmapConfig
) -> HeatmapLabels:
    """Reference densification: a full distance scan with a stable sort per point."""
    _check(cloud, labels)
    distances = point_distances(labels.points[None, :, :], cloud.points[:, None, :])
    order = np.argsort(distances, axis=1, kind="stable")[:, : cfg.k]
    kept = np.take_along_axis(distances, order, axis=1)

    is_positive = labels.polarity > 0
    if not np.any(is_positive):
        return HeatmapLabels(values=np.zeros(len(cloud)))
    nearest = distances[:, is_positive].min(axis=1)
    return HeatmapLabels(values=_heat(kept, labels.polarity[order], nearest, cfg))


def sparse_targets(cloud: PointCloud, grasps: Iterable[Grasp]) -> HeatmapLabels:
    """
    Heat 1 on the contact point of every successful grasp and 0 elsewhere.

    Grasps without a cloud index are matched to their nearest cloud point.
    """
    values = np.zeros(len(cloud))
    index = None
    for grasp in grasps:
        if grasp.label != "success":
            continue
        if 0 <= grasp.contact_point_index < len(cloud):
            values[grasp.contact_point_index] = 1.0
            continue
        if index is None:
            index = SpatialIndex(cloud.points)
        values[index.knn(grasp.contact_position, 1).indices[0]] = 1.0
    return HeatmapLabels(values=values)


def encode_heatmap(heatmap: HeatmapLabels) -> bytes:
    header = _HEADER.pack(HEATMAP_MAGIC, len(heatmap))
    return header + heatmap.values.astype("<f4").tobytes()


def decode_heatmap(data: bytes) -> HeatmapLabels:
    if len(data) < _HEADER.size:
        raise DatasetError("truncated AOHM header")
    magic, count = _HEADER.unpack_from(data, 0)
    if magic != HEATMAP_MAGIC:
        raise DatasetError(f"bad AOHM magic {magic!r}")
    if len(data) < _HEADER.size + 4 * count:
        raise DatasetError("truncated AOHM payload")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=_HEADER.size)
    return HeatmapLabels(values=values.astype(np.float64))


def save_heatmap(path: Path, heatmap: HeatmapLabels) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_bytes(encode_heatmap(heatmap))


def load_heatmap(path: Path) -> HeatmapLabels:
    return decode_heatmap(path.read_bytes())
