"""
Oriented-box versus triangle-mesh collision.

The narrow phase is the separating-axis test for a box and a triangle (13
candidate axes), vectorised over triangles. A per-triangle bounding-box
overlap check prunes the candidates first. A box lying entirely inside a
closed link mesh touches no triangle, so the box centre is also tested for
containment.
"""

from dataclasses import dataclass

import numpy as np

from core.articulated import ArticulatedObject, JointState, forward_kinematics
from core.mesh import point_in_mesh, transform_points

# Boxes that touch a triangle within this distance count as intersecting.
TOUCH_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    rotation: np.ndarray
    half_extents: np.ndarray

    def corners(self) -> np.ndarray:
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return (signs * self.half_extents) @ self.rotation.T + self.center

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        reach = np.abs(self.rotation) @ self.half_extents
        return self.center - reach, self.center + reach

    def transformed(self, transform: np.ndarray) -> "OrientedBox":
        return OrientedBox(
            center=transform[:3, :3] @ self.center + transform[:3, 3],
            rotation=transform[:3, :3] @ self.rotation,
            half_extents=self.half_extents,
        )


def box_triangle_overlap(box: OrientedBox, corners: np.ndarray) -> np.ndarray:
    """Boolean mask of triangles (m, 3, 3) that intersect ``box``."""
    if len(corners) == 0:
        return np.zeros(0, dtype=bool)
    local = (corners - box.center) @ box.rotation
    half = box.half_extents
    edges = np.stack(
        [
            local[:, 1] - local[:, 0],
            local[:, 2] - local[:, 1],
            local[:, 0] - local[:, 2],
        ],
        axis=1,
    )
    normal = np.cross(edges[:, 0], edges[:, 1])
    box_axes = np.eye(3)

    axes = [np.broadcast_to(box_axes[i], normal.shape) for i in range(3)]
    axes.append(normal)
    for e in range(3):
        for a in range(3):
            axes.append(np.cross(edges[:, e], box_axes[a]))

    overlap = np.ones(len(corners), dtype=bool)
    for axis in axes:
        projections = np.einsum("mvk,mk->mv", local, axis)
        radius = np.abs(axis) @ half
        scale = np.linalg.norm(axis, axis=1)
        slack = TOUCH_TOLERANCE * scale
        separated = (projections.min(axis=1) > radius + slack) | (
            projections.max(axis=1) < -radius - slack
        )
        overlap &= ~separated
    return overlap


def _aabb_candidates(
    box: OrientedBox, lows: np.ndarray, highs: np.ndarray
) -> np.ndarray:
    low, high = box.bounds()
    hit = np.all(highs >= low - TOUCH_TOLERANCE, axis=1) & np.all(
        lows <= high + TOUCH_TOLERANCE, axis=1
    )
    return np.flatnonzero(hit)


class PosedScene:
    """Triangle meshes of every link of an object posed at one joint state."""

    def __init__(self, obj: ArticulatedObject, state: JointState):
        self.obj = obj
        self.state = state
        self.transforms = forward_kinematics(obj, state)
        self.corners: dict[str, np.ndarray] = {}
        self._lows: dict[str, np.ndarray] = {}
        self._highs: dict[str, np.ndarray] = {}
        for link in obj.links:
            vertices = transform_points(self.transforms[link.name], link.vertices)
            corners = vertices[link.triangles]
            self.corners[link.name] = corners
            self._lows[link.name] = corners.min(axis=1)
            self._highs[link.name] = corners.max(axis=1)

    def intersecting_triangles(self, box: OrientedBox, link: str) -> np.ndarray:
        candidates = _aabb_candidates(box, self._lows[link], self._highs[link])
        if len(candidates) == 0:
            return candidates
        mask = box_triangle_overlap(box, self.corners[link][candidates])
        return candidates[mask]

    def box_hits_link(self, box: OrientedBox, link: str) -> bool:
        if len(self.intersecting_triangles(box, link)):
            return True
        link_low = self._lows[link].min(axis=0)
        link_high = self._highs[link].max(axis=0)
        if np.any(box.center < link_low) or np.any(box.center > link_high):
            return False
        return point_in_mesh(box.center, self.corners[link])

    def colliding_links(
        self, box: OrientedBox, links: list[str] | None = None
    ) -> list[str]:
        names = links if links is not None else self.obj.link_names
        return [name for name in names if self.box_hits_link(box, name)]

    def any_collision(
        self, boxes: list[OrientedBox], links: list[str] | None = None
    ) -> bool:
        names = links if links is not None else self.obj.link_names
        return any(self.box_hits_link(box, name) for box in boxes for name in names)
