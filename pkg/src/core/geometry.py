"""
Point-cloud primitives shared by every toolkit module.

Neighbour queries go through a private spatial index. Their contract is the
brute-force definition: Euclidean distance, ascending, ties broken by the
lower point index.
"""

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial import cKDTree

from core.errors import EmptyInputError, InvalidParameterError, MissingAttributeError

logger = logging.getLogger(__name__)

Frame = Literal["world", "camera"]

_UNIT_TOLERANCE = 1e-9
# Relative and absolute slack applied to tree radii; exact distances decide.
_RADIUS_SLACK = (1e-9, 1e-12)
_EXTRA_CANDIDATES = 8


def as_point(value: ArrayLike) -> np.ndarray:
    """Coerce ``value`` into a finite float64 vector of shape (3,)."""
    point = np.asarray(value, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(point)):
        raise InvalidParameterError(f"non-finite point {point.tolist()}")
    return point


def point_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distances from every row of ``points`` to ``query``."""
    return np.sqrt(np.sum((points - query) ** 2, axis=-1))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Ordered points plus optional per-point attributes.

    Attributes:
        points: (n, 3) positions in meters.
        normals: (n, 3) unit normals.
        curvature: (n,) surface variation in [0, 1].
        link_id: (n,) index of the link each point was sampled from.
        triangle_id: (n,) triangle index inside the posed scene.
        barycentric: (n, 2) barycentric (u, v) inside ``triangle_id``.
        scores: (n,) free per-point scalar (sampling score or likelihood).
        frame: coordinate frame the positions are expressed in.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    curvature: np.ndarray | None = None
    link_id: np.ndarray | None = None
    triangle_id: np.ndarray | None = None
    barycentric: np.ndarray | None = None
    scores: np.ndarray | None = None
    frame: Frame = "world"

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise InvalidParameterError("point cloud contains non-finite positions")
        object.__setattr__(self, "points", _frozen(points))
        n = len(points)

        shapes: dict[str, tuple[tuple[int, ...], type]] = {
            "normals": ((n, 3), np.float64),
            "curvature": ((n,), np.float64),
            "link_id": ((n,), np.int64),
            "triangle_id": ((n,), np.int64),
            "barycentric": ((n, 2), np.float64),
            "scores": ((n,), np.float64),
        }
        for name, (shape, dtype) in shapes.items():
            value = getattr(self, name)
            if value is None:
                continue
            array = np.array(value, dtype=dtype)
            if array.size != int(np.prod(shape)):
                raise InvalidParameterError(
                    f"attribute {name} has {array.shape} entries for {n} points"
                )
            object.__setattr__(self, name, _frozen(array.reshape(shape)))

        if self.normals is not None and n:
            norms = np.linalg.norm(self.normals, axis=1)
            if np.max(np.abs(norms - 1.0)) > _UNIT_TOLERANCE:
                raise InvalidParameterError("normals must have unit norm")
        if self.curvature is not None and n:
            if np.min(self.curvature) < 0.0 or np.max(self.curvature) > 1.0:
                raise InvalidParameterError("curvature must lie in [0, 1]")
        if (self.triangle_id is None) != (self.barycentric is None):
            raise InvalidParameterError(
                "triangle_id and barycentric must be given together"
            )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_surface_id(self) -> bool:
        return self.triangle_id is not None

    def with_attributes(self, **changes) -> "PointCloud":
        return replace(self, **changes)

    def subset(self, indices: ArrayLike) -> "PointCloud":
        """Return the cloud restricted to ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=np.intp)

        def pick(array: np.ndarray | None) -> np.ndarray | None:
            return None if array is None else array[idx]

        return PointCloud(
            points=self.points[idx],
            normals=pick(self.normals),
            curvature=pick(self.curvature),
            link_id=pick(self.link_id),
            triangle_id=pick(self.triangle_id),
            barycentric=pick(self.barycentric),
            scores=pick(self.scores),
            frame=self.frame,
        )

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise MissingAttributeError(
                f"point cloud is missing attribute(s): {', '.join(missing)}"
            )


@dataclass(frozen=True, eq=False)
class NeighborList:
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


class SpatialIndex:
    """Exact neighbour queries over a fixed point set."""

    def __init__(self, points: np.ndarray):
        self._points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self._tree = cKDTree(self._points) if len(self._points) else None

    def __len__(self) -> int:
        return len(self._points)

    def _require_points(self) -> cKDTree:
        if self._tree is None:
            raise EmptyInputError()
        return self._tree

    @staticmethod
    def _slack(radius: float) -> float:
        rel, absolute = _RADIUS_SLACK
        return radius * (1.0 + rel) + absolute

    def _rank(
        self, query: np.ndarray, candidates: np.ndarray, limit: int | None
    ) -> NeighborList:
        distances = point_distances(self._points[candidates], query)
        order = np.lexsort((candidates, distances))
        if limit is not None:
            order = order[:limit]
        return NeighborList(
            indices=candidates[order].astype(np.intp),
            distances=distances[order],
        )

    def knn(self, query: np.ndarray, k: int) -> NeighborList:
        tree = self._require_points()
        if k < 1:
            raise InvalidParameterError(f"k must be >= 1, got {k}")
        k_eff = min(k, len(self))
        tree_distances, _ = tree.query(query, k=k_eff)
        boundary = float(np.max(np.atleast_1d(tree_distances)))
        candidates = np.asarray(
            tree.query_ball_point(query, r=self._slack(boundary)), dtype=np.intp
        )
        return self._rank(query, candidates, k_eff)

    def radius(
        self, query: np.ndarray, r: float, max_count: int | None = None
    ) -> NeighborList:
        tree = self._require_points()
        if r < 0:
            raise InvalidParameterError(f"radius must be >= 0, got {r}")
        candidates = np.asarray(
            tree.query_ball_point(query, r=self._slack(r)), dtype=np.intp
        )
        ranked = self._rank(query, candidates, None)
        keep = ranked.distances <= r
        indices, distances = ranked.indices[keep], ranked.distances[keep]
        if max_count is not None:
            indices, distances = indices[:max_count], distances[:max_count]
        return NeighborList(indices=indices, distances=distances)

    def knn_many(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbours for every query row; arrays of shape (q, min(k, n))."""
        tree = self._require_points()
        if k < 1:
            raise InvalidParameterError(f"k must be >= 1, got {k}")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self)
        k_eff = min(k, n)
        width = min(n, k_eff + _EXTRA_CANDIDATES)
        _, idx = tree.query(queries, k=width)
        idx = np.asarray(idx, dtype=np.intp).reshape(len(queries), width)
        exact = point_distances(self._points[idx], queries[:, None, :])
        order = np.lexsort((idx, exact), axis=-1)
        idx = np.take_along_axis(idx, order, axis=-1)
        exact = np.take_along_axis(exact, order, axis=-1)

        if width < n:
            # Rows whose k-th distance ties the last candidate may hide a
            # lower-index point outside the candidate window.
            boundary = exact[:, k_eff - 1]
            unsafe = exact[:, -1] <= self._slack(boundary)
            for row in np.flatnonzero(unsafe):
                exact_row = self.knn(queries[row], k_eff)
                idx[row, :k_eff] = exact_row.indices
                exact[row, :k_eff] = exact_row.distances
        return idx[:, :k_eff], exact[:, :k_eff]

    def radius_many(
        self, queries: np.ndarray, r: float, max_count: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Radius neighbours for every query, truncated to ``max_count``.

        Returns index and distance arrays of shape (q, max_count); unused slots
        hold index -1 and distance inf.
        """
        tree = self._require_points()
        if r < 0:
            raise InvalidParameterError(f"radius must be >= 0, got {r}")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self)
        width = min(n, max_count + _EXTRA_CANDIDATES)
        _, idx = tree.query(queries, k=width, distance_upper_bound=self._slack(r))
        idx = np.asarray(idx, dtype=np.intp).reshape(len(queries), width)
        valid = idx < n
        safe_idx = np.where(valid, idx, 0)
        exact = point_distances(self._points[safe_idx], queries[:, None, :])
        exact = np.where(valid & (exact <= r), exact, np.inf)
        order = np.lexsort((safe_idx, exact), axis=-1)
        idx = np.take_along_axis(safe_idx, order, axis=-1)
        exact = np.take_along_axis(exact, order, axis=-1)

        out_idx = np.full((len(queries), max_count), -1, dtype=np.intp)
        out_dist = np.full((len(queries), max_count), np.inf)
        take = min(width, max_count)
        out_idx[:, :take] = np.where(np.isfinite(exact[:, :take]), idx[:, :take], -1)
        out_dist[:, :take] = exact[:, :take]

        if width < n:
            # A full window may have cut a tie on the truncation boundary.
            boundary = exact[:, max_count - 1]
            unsafe = np.isfinite(exact[:, -1]) & (exact[:, -1] <= self._slack(boundary))
            for row in np.flatnonzero(unsafe):
                exact_row = self.radius(queries[row], r, max_count)
                count = len(exact_row)
                out_idx[row] = -1
                out_dist[row] = np.inf
                out_idx[row, :count] = exact_row.indices
                out_dist[row, :count] = exact_row.distances
        return out_idx, out_dist


def knn(cloud: PointCloud, query: ArrayLike, k: int) -> NeighborList:
    """Return the ``min(k, |cloud|)`` nearest points to ``query``."""
    return SpatialIndex(cloud.points).knn(as_point(query), k)


def radius_neighbors(
    cloud: PointCloud, query: ArrayLike, r: float, max_count: int | None = None
) -> NeighborList:
    """All points within ``r`` of ``query``, nearest first, at most ``max_count``."""
    return SpatialIndex(cloud.points).radius(as_point(query), r, max_count)


def farthest_point_sample(cloud: PointCloud, m: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling starting at ``seed_index``."""
    n = len(cloud)
    if n == 0:
        raise EmptyInputError()
    if not 1 <= m <= n:
        raise InvalidParameterError(f"cannot sample {m} points from a cloud of {n}")
    if not 0 <= seed_index < n:
        raise InvalidParameterError(f"seed index {seed_index} out of range")

    points = cloud.points
    chosen = np.empty(m, dtype=np.intp)
    chosen[0] = seed_index
    min_dist = point_distances(points, points[seed_index])
    min_dist[seed_index] = -np.inf
    for i in range(1, m):
        nxt = int(np.argmax(min_dist))
        chosen[i] = nxt
        min_dist = np.minimum(min_dist, point_distances(points, points[nxt]))
        min_dist[nxt] = -np.inf
    return chosen


def estimate_normals_curvature(
    cloud: PointCloud, k_nbrs: int, viewpoint: ArrayLike
) -> tuple[PointCloud, int]:
    """
    Local-PCA normals and surface-variation curvature.

    Normals are flipped toward ``viewpoint``. Curvature is
    ``λ0 / (λ0 + λ1 + λ2)`` of the neighbourhood covariance.

    Returns:
        The cloud with ``normals`` and ``curvature`` set, and the number of
        points whose neighbourhood was degenerate (all neighbours coincident).
    """
    if len(cloud) == 0:
        raise EmptyInputError()
    if k_nbrs < 3:
        raise InvalidParameterError(f"k_nbrs must be >= 3, got {k_nbrs}")
    view = as_point(viewpoint)
    points = cloud.points

    idx, _ = SpatialIndex(points).knn_many(points, k_nbrs)
    neighbours = points[idx]
    centered = neighbours - neighbours.mean(axis=1, keepdims=True)
    covariance = np.einsum("nki,nkj->nij", centered, centered) / idx.shape[1]
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)

    normals = eigenvectors[:, :, 0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    to_view = view - points
    flip = np.sum(normals * to_view, axis=1) < 0.0
    normals[flip] *= -1.0

    lam = np.clip(eigenvalues, 0.0, None)
    total = lam.sum(axis=1)
    curvature = np.divide(lam[:, 0], total, out=np.zeros(len(points)), where=total > 0)
    curvature = np.clip(curvature, 0.0, 1.0)

    degenerate = np.all(neighbours == neighbours[:, :1, :], axis=(1, 2)) | (total <= 0)
    count = int(np.count_nonzero(degenerate))
    if count:
        fallback = to_view[degenerate]
        lengths = np.linalg.norm(fallback, axis=1, keepdims=True)
        fallback = np.where(
            lengths > 0, fallback / np.where(lengths > 0, lengths, 1.0), [0.0, 0.0, 1.0]
        )
        normals[degenerate] = fallback
        curvature[degenerate] = 0.0
        logger.warning("%d point(s) had a degenerate neighbourhood", count)

    return cloud.with_attributes(normals=normals, curvature=curvature), count


def center_at_mean(cloud: PointCloud) -> tuple[PointCloud, np.ndarray]:
    """Translate the cloud so its centroid is the origin; return the centroid."""
    if len(cloud) == 0:
        raise EmptyInputError()
    centroid = cloud.points.mean(axis=0)
    return cloud.with_attributes(points=cloud.points - centroid), centroid


def rigid_transform_cloud(
    cloud: PointCloud, rotation: np.ndarray, translation: np.ndarray, frame: Frame
) -> PointCloud:
    """Apply ``p -> R p + t`` to positions and ``n -> R n`` to normals."""
    points = cloud.points @ rotation.T + translation
    normals = None
    if cloud.normals is not None:
        normals = cloud.normals @ rotation.T
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return cloud.with_attributes(points=points, normals=normals, frame=frame)
