"""Triangle-mesh helpers: primitive boxes, ray casting and closest points."""

import numpy as np

# Hits closer than this along a ray are ignored (self-intersection guard).
RAY_EPSILON = 1e-9
# Skewed so that parity rays do not run along axis-aligned edges.
_PARITY_DIRECTION = np.array([0.8018837, 0.5345225, 0.2672612])
_RAY_CHUNK = 2048

_BOX_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)
# Counter-clockwise seen from outside.
_BOX_TRIANGLES = np.array(
    [
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ],
    dtype=np.int64,
)


def box_mesh(
    center: np.ndarray, half_extents: np.ndarray, rotation: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Closed box with outward-facing triangles."""
    corners = _BOX_CORNERS * np.asarray(half_extents, dtype=np.float64)
    if rotation is not None:
        corners = corners @ np.asarray(rotation).T
    return corners + np.asarray(center, dtype=np.float64), _BOX_TRIANGLES.copy()


def merge_meshes(
    parts: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[np.ndarray] = []
    triangles: list[np.ndarray] = []
    offset = 0
    for part_vertices, part_triangles in parts:
        vertices.append(part_vertices)
        triangles.append(part_triangles + offset)
        offset += len(part_vertices)
    return np.vstack(vertices), np.vstack(triangles)


def transform_points(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ transform[:3, :3].T + transform[:3, 3]


def triangle_corners(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """(m, 3, 3) corner coordinates."""
    return vertices[triangles]


def triangle_areas(corners: np.ndarray) -> np.ndarray:
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def triangle_normals(corners: np.ndarray) -> np.ndarray:
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return cross / np.linalg.norm(cross, axis=1, keepdims=True)


def ray_triangle_hits(
    origins: np.ndarray, directions: np.ndarray, corners: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Nearest ray/triangle intersection per ray (Möller–Trumbore).

    Returns:
        ``(t, triangle, uv)``: hit distance along each (unit) direction, or inf
        for a miss; the hit triangle index, or -1; barycentric (u, v).
        Equal distances resolve to the lower triangle index.
    """
    origins = np.atleast_2d(origins)
    directions = np.atleast_2d(directions)
    n_rays = len(directions)
    if len(origins) == 1 and n_rays > 1:
        origins = np.broadcast_to(origins, directions.shape)

    best_t = np.full(n_rays, np.inf)
    best_tri = np.full(n_rays, -1, dtype=np.int64)
    best_uv = np.zeros((n_rays, 2))
    if len(corners) == 0:
        return best_t, best_tri, best_uv

    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    for start in range(0, n_rays, _RAY_CHUNK):
        stop = min(start + _RAY_CHUNK, n_rays)
        o = origins[start:stop, None, :]
        d = directions[start:stop, None, :]
        p = np.cross(d, e2[None])
        det = np.sum(e1[None] * p, axis=2)
        parallel = np.abs(det) < 1e-14
        inv = np.where(parallel, 0.0, 1.0 / np.where(parallel, 1.0, det))
        s = o - v0[None]
        u = np.sum(s * p, axis=2) * inv
        q = np.cross(s, e1[None])
        v = np.sum(d * q, axis=2) * inv
        t = np.sum(e2[None] * q, axis=2) * inv
        hit = (
            ~parallel
            & (u >= 0.0)
            & (v >= 0.0)
            & (u + v <= 1.0)
            & (t > RAY_EPSILON)
        )
        t = np.where(hit, t, np.inf)
        tri = np.argmin(t, axis=1)
        rows = np.arange(stop - start)
        chunk_t = t[rows, tri]
        found = np.isfinite(chunk_t)
        best_t[start:stop] = chunk_t
        best_tri[start:stop] = np.where(found, tri, -1)
        best_uv[start:stop, 0] = np.where(found, u[rows, tri], 0.0)
        best_uv[start:stop, 1] = np.where(found, v[rows, tri], 0.0)
    return best_t, best_tri, best_uv


def point_in_mesh(point: np.ndarray, corners: np.ndarray) -> bool:
    """Parity test; meaningful for closed (possibly multi-component) meshes."""
    if len(corners) == 0:
        return False
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    d = _PARITY_DIRECTION
    p = np.cross(d, e2)
    det = np.sum(e1 * p, axis=1)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = point - v0
    u = np.sum(s * p, axis=1) * inv
    q = np.cross(s, e1)
    v = (q @ d) * inv
    t = np.sum(e2 * q, axis=1) * inv
    crossings = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return bool(np.count_nonzero(crossings) % 2)


def closest_points_on_triangles(
    point: np.ndarray, corners: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closest point on each triangle to ``point`` and its distance."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    normal = np.cross(b - a, c - a)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    projected = point - np.sum((point - a) * normal, axis=1, keepdims=True) * normal

    # Barycentric inside test for the projection.
    v0, v1, v2 = b - a, c - a, projected - a
    d00 = np.sum(v0 * v0, axis=1)
    d01 = np.sum(v0 * v1, axis=1)
    d11 = np.sum(v1 * v1, axis=1)
    d20 = np.sum(v2 * v0, axis=1)
    d21 = np.sum(v2 * v1, axis=1)
    denom = d00 * d11 - d01 * d01
    beta = (d11 * d20 - d01 * d21) / denom
    gamma = (d00 * d21 - d01 * d20) / denom
    inside = (beta >= 0) & (gamma >= 0) & (beta + gamma <= 1)

    candidates = [projected]
    for start, end in ((a, b), (b, c), (c, a)):
        edge = end - start
        s = np.clip(
            np.sum((point - start) * edge, axis=1) / np.sum(edge * edge, axis=1),
            0.0,
            1.0,
        )
        candidates.append(start + s[:, None] * edge)
    stacked = np.stack(candidates, axis=1)
    distances = np.linalg.norm(stacked - point, axis=2)
    distances[:, 0] = np.where(inside, distances[:, 0], np.inf)
    best = np.argmin(distances, axis=1)
    rows = np.arange(len(corners))
    return stacked[rows, best], distances[rows, best]
