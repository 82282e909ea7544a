"""
Articulated-object model: links, joints, kinematic tree and forward kinematics.

Object documents are JSON::

    {
      "name": "...",
      "links": [{"name", "tag", "vertices": [[x, y, z], ...],
                 "triangles": [[i, j, k], ...], "parent": optional}],
      "joints": [{"name", "type", "parent", "child", "axis", "origin",
                  "limits": [lower, upper], "closed_value"}]
    }

Geometry, joint axes and origins are expressed in the world frame with every
joint at q = 0. A link ``parent`` is a rigid attachment without a joint.
"""

import json
import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.spatial.transform import Rotation

from core.errors import (
    InvalidParameterError,
    KinematicCycleError,
    MissingJointError,
    ObjectSpecError,
)
from core.mesh import triangle_areas
from core.seeding import as_generator

logger = logging.getLogger(__name__)

JointType = Literal["revolute", "prismatic"]
SemanticTag = Literal["base", "movable", "actionable"]

MIN_TRIANGLE_AREA = 1e-12
UNIT_TOLERANCE = 1e-9
RENORMALIZE_TOLERANCE = 1e-3
# Fraction of the joint range an open state must clear.
OPEN_MARGIN = 0.02


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    tag: SemanticTag
    vertices: np.ndarray
    triangles: np.ndarray
    parent: str | None = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(triangles) == 0:
            raise InvalidParameterError(f"link {self.name!r} has an empty mesh")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise InvalidParameterError(
                f"link {self.name!r} references a missing vertex"
            )
        areas = triangle_areas(vertices[triangles])
        if np.any(areas <= MIN_TRIANGLE_AREA):
            bad = int(np.argmax(areas <= MIN_TRIANGLE_AREA))
            raise InvalidParameterError(
                f"link {self.name!r} triangle {bad} is degenerate"
            )
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Link):
            return NotImplemented
        return (
            self.name == other.name
            and self.tag == other.tag
            and self.parent == other.parent
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Joint:
    """
    A single-DoF joint.

    ``origin`` is a point on the axis (revolute) or the anchor (prismatic);
    ``closed_value`` is the limit at which the part counts as closed.
    """

    name: str
    type: JointType
    parent: str
    child: str
    axis: np.ndarray
    origin: np.ndarray
    limits: tuple[float, float]
    closed_value: float

    def __post_init__(self):
        axis = np.array(self.axis, dtype=np.float64).reshape(3)
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOLERANCE:
            raise InvalidParameterError(f"joint {self.name!r} axis is not unit")
        lower, upper = (float(v) for v in self.limits)
        if lower > upper:
            raise InvalidParameterError(
                f"joint {self.name!r} limits have lower > upper"
            )
        if self.closed_value not in (lower, upper):
            raise InvalidParameterError(
                f"joint {self.name!r} closed_value must equal one of its limits"
            )
        axis.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "limits", (lower, upper))
        object.__setattr__(self, "closed_value", float(self.closed_value))

    @property
    def lower(self) -> float:
        return self.limits[0]

    @property
    def upper(self) -> float:
        return self.limits[1]

    @property
    def span(self) -> float:
        return self.upper - self.lower

    @property
    def opening_sign(self) -> float:
        """+1 when opening increases q, -1 when it decreases q."""
        if self.span > 0 and self.closed_value == self.upper:
            return -1.0
        return 1.0

    def clamp(self, q: float) -> float:
        return float(min(max(q, self.lower), self.upper))

    def motion(self, q: float) -> np.ndarray:
        """Homogeneous transform of the child subtree at joint value ``q``."""
        transform = np.eye(4)
        if self.type == "revolute":
            rotation = Rotation.from_rotvec(self.axis * q).as_matrix()
            transform[:3, :3] = rotation
            transform[:3, 3] = self.origin - rotation @ self.origin
        else:
            transform[:3, 3] = q * self.axis
        return transform

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Joint):
            return NotImplemented
        return (
            self.name == other.name
            and self.type == other.type
            and self.parent == other.parent
            and self.child == other.child
            and np.array_equal(self.axis, other.axis)
            and np.array_equal(self.origin, other.origin)
            and self.limits == other.limits
            and self.closed_value == other.closed_value
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class JointState:
    """Joint name to joint value (radians or meters)."""

    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "values", {name: float(q) for name, q in self.values.items()}
        )

    def __getitem__(self, joint: str) -> float:
        try:
            return self.values[joint]
        except KeyError:
            raise MissingJointError(joint) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)

    def with_value(self, joint: str, q: float) -> "JointState":
        return JointState({**self.values, joint: q})

    @classmethod
    def closed(cls, obj: "ArticulatedObject") -> "JointState":
        return cls({joint.name: joint.closed_value for joint in obj.joints})

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.values.items())))


@dataclass(frozen=True, eq=False)
class ArticulatedObject:
    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...] = ()
    _parents: dict[str, tuple[str, Joint | None]] = field(
        init=False, repr=False, compare=False
    )
    _order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        names = [link.name for link in self.links]
        if len(set(names)) != len(names):
            raise InvalidParameterError("link names must be unique")
        joint_names = [joint.name for joint in self.joints]
        if len(set(joint_names)) != len(joint_names):
            raise InvalidParameterError("joint names must be unique")

        parents: dict[str, tuple[str, Joint | None]] = {}
        for link in self.links:
            if link.parent is not None:
                if link.parent not in names:
                    raise InvalidParameterError(
                        f"link {link.name!r} attaches to unknown link {link.parent!r}"
                    )
                parents[link.name] = (link.parent, None)
        for joint in self.joints:
            for end in (joint.parent, joint.child):
                if end not in names:
                    raise InvalidParameterError(
                        f"joint {joint.name!r} references unknown link {end!r}"
                    )
            if joint.child in parents:
                raise InvalidParameterError(
                    f"link {joint.child!r} has more than one parent"
                )
            parents[joint.child] = (joint.parent, joint)

        for start in names:
            seen = {start}
            current = start
            while current in parents:
                parent, joint = parents[current]
                if parent in seen:
                    raise KinematicCycleError(joint.name if joint else current)
                seen.add(parent)
                current = parent

        roots = [name for name in names if name not in parents]
        if len(roots) != 1:
            raise InvalidParameterError(
                f"expected exactly one root link, found {len(roots)}"
            )

        children: dict[str, list[str]] = {name: [] for name in names}
        for name in names:
            if name in parents:
                children[parents[name][0]].append(name)
        order: list[str] = []
        frontier = [roots[0]]
        while frontier:
            current = frontier.pop(0)
            order.append(current)
            frontier.extend(children[current])

        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_order", tuple(order))

        for link in self.links:
            if link.tag != "base" and not self._has_joint_ancestor(link.name):
                raise InvalidParameterError(
                    f"{link.tag} link {link.name!r} is not moved by any joint"
                )

    def _has_joint_ancestor(self, name: str) -> bool:
        current = name
        while current in self._parents:
            parent, joint = self._parents[current]
            if joint is not None:
                return True
            current = parent
        return False

    @property
    def root(self) -> str:
        return self._order[0]

    @property
    def link_names(self) -> list[str]:
        return [link.name for link in self.links]

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def link(self, name: str) -> Link:
        for link in self.links:
            if link.name == name:
                return link
        raise InvalidParameterError(f"unknown link {name!r}")

    def link_index(self, name: str) -> int:
        return self.link_names.index(name)

    def joint(self, name: str) -> Joint:
        for joint in self.joints:
            if joint.name == name:
                return joint
        raise MissingJointError(name)

    def target_joint(self, name: str | None = None) -> Joint:
        """The joint an episode actuates: ``name`` or the first declared joint."""
        if name is not None:
            return self.joint(name)
        if not self.joints:
            raise InvalidParameterError(f"object {self.name!r} has no joints")
        return self.joints[0]

    def parent_of(self, link: str) -> tuple[str, Joint | None] | None:
        return self._parents.get(link)

    def moving_links(self, joint_name: str) -> set[str]:
        """Links carried by ``joint_name``: its child and every descendant."""
        joint = self.joint(joint_name)
        moving = {joint.child}
        for name in self._order:
            entry = self._parents.get(name)
            if entry is not None and entry[0] in moving:
                moving.add(name)
        return moving

    def actionable_link_ids(self) -> np.ndarray:
        return np.array(
            [i for i, link in enumerate(self.links) if link.tag == "actionable"],
            dtype=np.int64,
        )

    def validate_state(self, state: JointState) -> None:
        for joint in self.joints:
            q = state[joint.name]
            if not joint.lower - 1e-12 <= q <= joint.upper + 1e-12:
                raise InvalidParameterError(
                    f"joint {joint.name!r} value {q} outside {joint.limits}"
                )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArticulatedObject):
            return NotImplemented
        return (
            self.name == other.name
            and self.links == other.links
            and self.joints == other.joints
        )

    __hash__ = None  # type: ignore[assignment]


def forward_kinematics(
    obj: ArticulatedObject, state: JointState
) -> dict[str, np.ndarray]:
    """World transform of every link at ``state``; the root gets identity."""
    for joint in obj.joints:
        _ = state[joint.name]
    transforms: dict[str, np.ndarray] = {obj.root: np.eye(4)}
    for name in obj.topological_order[1:]:
        entry = obj.parent_of(name)
        assert entry is not None
        parent, joint = entry
        if joint is None:
            transforms[name] = transforms[parent].copy()
        else:
            transforms[name] = transforms[parent] @ joint.motion(state[joint.name])
    return transforms


def posed_joint(obj: ArticulatedObject, state: JointState, joint_name: str) -> Joint:
    """The joint with axis and origin expressed in the world frame at ``state``."""
    joint = obj.joint(joint_name)
    parent_transform = forward_kinematics(obj, state)[joint.parent]
    axis = parent_transform[:3, :3] @ joint.axis
    return replace(
        joint,
        axis=axis / np.linalg.norm(axis),
        origin=parent_transform[:3, :3] @ joint.origin + parent_transform[:3, 3],
    )


def distances_to_joint_axis(points: np.ndarray, joint: Joint) -> np.ndarray:
    """
    Per-point distance used for sampling scores.

    Revolute: perpendicular distance to the axis line. Prismatic: 1.0, since
    every point on a sliding part moves equally.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if joint.type == "prismatic":
        return np.ones(len(points))
    offset = points - joint.origin
    along = offset @ joint.axis
    perpendicular = offset - along[:, None] * joint.axis
    return np.linalg.norm(perpendicular, axis=1)


def distance_to_joint_axis(point: np.ndarray, joint: Joint) -> float:
    return float(distances_to_joint_axis(np.asarray(point).reshape(1, 3), joint)[0])


def sample_states(
    obj: ArticulatedObject, n_open: int, rng_seed: int | np.random.Generator
) -> list[JointState]:
    """
    The closed state followed by ``n_open`` random open states.

    Each open value lies strictly more than 2% of the joint range away from
    the closed limit, up to and including the other limit.
    """
    if n_open < 0:
        raise InvalidParameterError(f"n_open must be >= 0, got {n_open}")
    rng = as_generator(rng_seed)
    states = [JointState.closed(obj)]
    for _ in range(n_open):
        values: dict[str, float] = {}
        for joint in obj.joints:
            if joint.span <= 0:
                values[joint.name] = joint.closed_value
                continue
            margin = OPEN_MARGIN * joint.span
            travel = margin + (joint.span - margin) * (1.0 - rng.random())
            values[joint.name] = joint.clamp(
                joint.closed_value + joint.opening_sign * travel
            )
        states.append(JointState(values))
    return states


class _RawLink(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    tag: SemanticTag
    vertices: list[tuple[float, float, float]] = Field(min_length=3)
    triangles: list[tuple[int, int, int]] = Field(min_length=1)
    parent: str | None = None


class _RawJoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    type: JointType
    parent: str
    child: str
    axis: tuple[float, float, float]
    origin: tuple[float, float, float]
    limits: tuple[float, float]
    closed_value: float


class _RawObject(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    links: list[_RawLink] = Field(min_length=1)
    joints: list[_RawJoint] = []


def json_path(location: tuple[int | str, ...]) -> str:
    """Render a pydantic error location as ``$.a[0].b``."""
    path = "$"
    for part in location:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def _normalized_axis(raw: _RawJoint, index: int) -> np.ndarray:
    axis = np.asarray(raw.axis, dtype=np.float64)
    norm = float(np.linalg.norm(axis))
    deviation = abs(norm - 1.0)
    if deviation <= UNIT_TOLERANCE:
        return axis
    if deviation <= RENORMALIZE_TOLERANCE:
        logger.warning(
            "joint %s axis norm %.6f renormalized to unit length", raw.name, norm
        )
        return axis / norm
    raise ObjectSpecError(f"$.joints[{index}].axis", f"axis norm {norm} is not unit")


def parse_object(text: str) -> ArticulatedObject:
    """Parse and validate an object document."""
    try:
        raw = _RawObject.model_validate_json(text)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ObjectSpecError(json_path(tuple(first["loc"])), first["msg"]) from exc

    links: list[Link] = []
    for i, raw_link in enumerate(raw.links):
        try:
            links.append(
                Link(
                    name=raw_link.name,
                    tag=raw_link.tag,
                    vertices=np.asarray(raw_link.vertices, dtype=np.float64),
                    triangles=np.asarray(raw_link.triangles, dtype=np.int64),
                    parent=raw_link.parent,
                )
            )
        except InvalidParameterError as exc:
            raise ObjectSpecError(f"$.links[{i}]", str(exc)) from exc

    joints: list[Joint] = []
    for i, raw_joint in enumerate(raw.joints):
        lower, upper = raw_joint.limits
        if lower > upper:
            raise ObjectSpecError(f"$.joints[{i}].limits", "lower limit above upper")
        if raw_joint.closed_value not in (lower, upper):
            raise ObjectSpecError(
                f"$.joints[{i}].closed_value", "closed_value must equal a limit"
            )
        joints.append(
            Joint(
                name=raw_joint.name,
                type=raw_joint.type,
                parent=raw_joint.parent,
                child=raw_joint.child,
                axis=_normalized_axis(raw_joint, i),
                origin=np.asarray(raw_joint.origin, dtype=np.float64),
                limits=(lower, upper),
                closed_value=raw_joint.closed_value,
            )
        )

    try:
        return ArticulatedObject(
            name=raw.name, links=tuple(links), joints=tuple(joints)
        )
    except KinematicCycleError:
        raise
    except InvalidParameterError as exc:
        raise ObjectSpecError("$", str(exc)) from exc


def object_document(obj: ArticulatedObject) -> dict:
    links = []
    for link in obj.links:
        entry: dict = {
            "name": link.name,
            "tag": link.tag,
            "vertices": link.vertices.tolist(),
            "triangles": link.triangles.tolist(),
        }
        if link.parent is not None:
            entry["parent"] = link.parent
        links.append(entry)
    joints = [
        {
            "name": joint.name,
            "type": joint.type,
            "parent": joint.parent,
            "child": joint.child,
            "axis": joint.axis.tolist(),
            "origin": joint.origin.tolist(),
            "limits": list(joint.limits),
            "closed_value": joint.closed_value,
        }
        for joint in obj.joints
    ]
    return {"name": obj.name, "links": links, "joints": joints}


def serialize_object(obj: ArticulatedObject) -> str:
    return json.dumps(object_document(obj), indent=1)


def load_object(path: Path) -> ArticulatedObject:
    return parse_object(path.read_text(encoding="utf-8"))


def save_object(path: Path, obj: ArticulatedObject) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_text(serialize_object(obj), encoding="utf-8")
