"""
Procedural articulated objects: cabinets, drawers, lidded boxes and bins.

Conventions: the object's front faces +x, the viewer's right is +y and up is
+z. Every generated object has a ``body`` base link, one movable link driven by
one joint, and one actionable ``handle`` link rigidly attached to the movable
link.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.articulated import ArticulatedObject, Joint, Link
from core.errors import InvalidParameterError
from core.mesh import box_mesh, merge_meshes
from core.seeding import as_generator

ObjectKind = Literal["cabinet_door", "drawer", "box_lid", "bin_swing_lid"]
HingeSide = Literal["left", "right", "top", "bottom"]
HandleStyle = Literal["bar", "knob", "lip"]

KINDS: tuple[ObjectKind, ...] = ("cabinet_door", "drawer", "box_lid", "bin_swing_lid")
DEFAULT_HANDLE: dict[ObjectKind, HandleStyle] = {
    "cabinet_door": "bar",
    "drawer": "bar",
    "box_lid": "lip",
    "bin_swing_lid": "knob",
}

WALL = 0.02
BAR_STANDOFF = 0.035
KNOB_DEPTH = 0.03
LIP_REACH = 0.03
REVOLUTE_LIMITS = (0.0, float(np.pi / 2))
PRISMATIC_LIMITS = (0.0, 0.3)

Mesh = tuple[np.ndarray, np.ndarray]


class ProceduralParams(BaseModel):
    """Size and handle parameters; lengths in meters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    width: float = Field(default=0.5, ge=0.2, le=1.0)
    height: float = Field(default=0.6, ge=0.2, le=1.0)
    depth: float = Field(default=0.4, ge=0.2, le=1.0)
    handle_radius: float = Field(default=0.01, ge=0.005, le=0.03)
    hinge_side: HingeSide = "right"
    handle: HandleStyle | None = None


@dataclass(frozen=True)
class _Panel:
    """A flat moving part: centre, outward normal, in-plane right and up axes."""

    center: np.ndarray
    normal: np.ndarray
    right: np.ndarray
    up: np.ndarray
    half_right: float
    half_up: float

    def edge(self, side: HingeSide) -> tuple[np.ndarray, float]:
        """Unit vector from the panel centre toward ``side`` and the half extent."""
        return {
            "left": (-self.right, self.half_right),
            "right": (self.right, self.half_right),
            "top": (self.up, self.half_up),
            "bottom": (-self.up, self.half_up),
        }[side]

    def mesh(self) -> Mesh:
        rotation = np.column_stack([self.right, self.up, self.normal])
        return box_mesh(
            self.center, np.array([self.half_right, self.half_up, WALL / 2]), rotation
        )


def _axis_box(
    low: tuple[float, float, float], high: tuple[float, float, float]
) -> Mesh:
    lo, hi = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
    return box_mesh((lo + hi) / 2, (hi - lo) / 2)


def _oriented_box(
    center: np.ndarray, axes: tuple[np.ndarray, np.ndarray, np.ndarray], half: tuple
) -> Mesh:
    return box_mesh(center, np.asarray(half, dtype=np.float64), np.column_stack(axes))


def _open_front_body(p: ProceduralParams) -> Mesh:
    d, w, h, t = p.depth / 2, p.width / 2, p.height, WALL
    return merge_meshes(
        [
            _axis_box((-d, -w, 0.0), (-d + t, w, h)),
            _axis_box((-d + t, -w, 0.0), (d, -w + t, h)),
            _axis_box((-d + t, w - t, 0.0), (d, w, h)),
            _axis_box((-d + t, -w + t, 0.0), (d, w - t, t)),
            _axis_box((-d + t, -w + t, h - t), (d, w - t, h)),
        ]
    )


def _open_top_body(p: ProceduralParams) -> Mesh:
    d, w, h, t = p.depth / 2, p.width / 2, p.height, WALL
    return merge_meshes(
        [
            _axis_box((-d, -w, 0.0), (d, w, t)),
            _axis_box((-d, -w, t), (-d + t, w, h)),
            _axis_box((d - t, -w, t), (d, w, h)),
            _axis_box((-d + t, -w, t), (d - t, -w + t, h)),
            _axis_box((-d + t, w - t, t), (d - t, w, h)),
        ]
    )


def _handle_mesh(
    style: HandleStyle,
    anchor: np.ndarray,
    normal: np.ndarray,
    along: np.ndarray,
    outward: np.ndarray,
    length: float,
    radius: float,
) -> Mesh:
    """
    Handle geometry.

    ``anchor`` is on the panel's front face (bar, knob) or its edge (lip);
    ``along`` is the bar direction and ``outward`` points away from the hinge.
    """
    axes = (along, np.cross(normal, along), normal)
    if style == "bar":
        bar_center = anchor + normal * (BAR_STANDOFF + radius)
        bar = _oriented_box(bar_center, axes, (length / 2, radius, radius))
        post_offset = length / 2 - radius
        posts = [
            _oriented_box(
                anchor + normal * (BAR_STANDOFF / 2) + along * sign * post_offset,
                axes,
                (radius, radius, BAR_STANDOFF / 2),
            )
            for sign in (-1.0, 1.0)
        ]
        return merge_meshes([bar, *posts])
    if style == "knob":
        return _oriented_box(
            anchor + normal * (KNOB_DEPTH / 2), axes, (radius, radius, KNOB_DEPTH / 2)
        )
    return _oriented_box(
        anchor + outward * (LIP_REACH / 2),
        (along, outward, np.cross(along, outward)),
        (length / 2, LIP_REACH / 2, radius),
    )


def _hinged_object(
    name: str,
    body: Mesh,
    panel: _Panel,
    moving_name: str,
    p: ProceduralParams,
    style: HandleStyle,
    rng: np.random.Generator,
) -> ArticulatedObject:
    hinge_dir, hinge_half = panel.edge(p.hinge_side)
    to_handle = -hinge_dir
    # Hinge line on the panel's back face; opening swings the panel outward.
    origin = panel.center + hinge_dir * hinge_half - panel.normal * (WALL / 2)
    axis = np.cross(to_handle, panel.normal)
    along = np.cross(panel.normal, to_handle)
    if p.hinge_side in ("left", "right"):
        perpendicular_half = panel.half_up
    else:
        perpendicular_half = panel.half_right

    inset = min(rng.uniform(0.04, 0.08), hinge_half)
    length = max(0.08, rng.uniform(0.3, 0.5) * 2 * perpendicular_half)
    length = min(length, 2 * perpendicular_half)
    if style == "lip":
        anchor = panel.center + to_handle * hinge_half
    else:
        anchor = (
            panel.center
            + to_handle * (hinge_half - inset)
            + panel.normal * (WALL / 2)
        )
    handle = _handle_mesh(
        style, anchor, panel.normal, along, to_handle, length, p.handle_radius
    )
    return _assemble(
        name,
        body,
        panel.mesh(),
        moving_name,
        handle,
        Joint(
            name="hinge",
            type="revolute",
            parent="body",
            child=moving_name,
            axis=axis / np.linalg.norm(axis),
            origin=origin,
            limits=REVOLUTE_LIMITS,
            closed_value=REVOLUTE_LIMITS[0],
        ),
    )


def _assemble(
    name: str, body: Mesh, moving: Mesh, moving_name: str, handle: Mesh, joint: Joint
) -> ArticulatedObject:
    return ArticulatedObject(
        name=name,
        links=(
            Link(name="body", tag="base", vertices=body[0], triangles=body[1]),
            Link(
                name=moving_name, tag="movable", vertices=moving[0], triangles=moving[1]
            ),
            Link(
                name="handle",
                tag="actionable",
                vertices=handle[0],
                triangles=handle[1],
                parent=moving_name,
            ),
        ),
        joints=(joint,),
    )


def _cabinet_door(p: ProceduralParams, style: HandleStyle, rng) -> ArticulatedObject:
    panel = _Panel(
        center=np.array([p.depth / 2 + WALL / 2, 0.0, p.height / 2]),
        normal=np.array([1.0, 0.0, 0.0]),
        right=np.array([0.0, 1.0, 0.0]),
        up=np.array([0.0, 0.0, 1.0]),
        half_right=p.width / 2,
        half_up=p.height / 2,
    )
    return _hinged_object(
        "cabinet_door", _open_front_body(p), panel, "door", p, style, rng
    )


def _lid_panel(p: ProceduralParams) -> _Panel:
    # Seen from above with the front toward the viewer: "top" is the back edge.
    return _Panel(
        center=np.array([0.0, 0.0, p.height + WALL / 2]),
        normal=np.array([0.0, 0.0, 1.0]),
        right=np.array([0.0, 1.0, 0.0]),
        up=np.array([-1.0, 0.0, 0.0]),
        half_right=p.width / 2,
        half_up=p.depth / 2,
    )


def _box_lid(p: ProceduralParams, style: HandleStyle, rng) -> ArticulatedObject:
    return _hinged_object(
        "box_lid", _open_top_body(p), _lid_panel(p), "lid", p, style, rng
    )


def _bin_swing_lid(p: ProceduralParams, style: HandleStyle, rng) -> ArticulatedObject:
    return _hinged_object(
        "bin_swing_lid", _open_top_body(p), _lid_panel(p), "lid", p, style, rng
    )


def _drawer(p: ProceduralParams, style: HandleStyle, rng) -> ArticulatedObject:
    d, w, h, t = p.depth / 2, p.width / 2, p.height, WALL
    gap = 0.005
    front = _axis_box((d, -w, 0.0), (d + t, w, h))
    # Tray interior bounds: back x0, sides y0..y1, floor z0, rim z1.
    x0, y0, y1 = -d + t + gap, -w + t + gap, w - t - gap
    z0, z1 = t + gap, h - t - 2 * gap
    tray = merge_meshes(
        [
            front,
            _axis_box((x0, y0, z0), (d, y1, z0 + t)),
            _axis_box((x0, y0, z0 + t), (d, y0 + t, z1)),
            _axis_box((x0, y1 - t, z0 + t), (d, y1, z1)),
            _axis_box((x0, y0 + t, z0 + t), (x0 + t, y1 - t, z1)),
        ]
    )
    normal = np.array([1.0, 0.0, 0.0])
    along = np.array([0.0, 1.0, 0.0])
    length = min(2 * w, max(0.08, rng.uniform(0.3, 0.5) * 2 * w))
    anchor = np.array([d + t, 0.0, rng.uniform(0.55, 0.75) * h])
    if style == "lip":
        anchor = np.array([d + t / 2, 0.0, h])
    handle = _handle_mesh(
        style,
        anchor,
        normal,
        along,
        np.array([0.0, 0.0, 1.0]) if style == "lip" else normal,
        length,
        p.handle_radius,
    )
    joint = Joint(
        name="slide",
        type="prismatic",
        parent="body",
        child="drawer",
        axis=normal,
        origin=np.array([d, 0.0, h / 2]),
        limits=PRISMATIC_LIMITS,
        closed_value=PRISMATIC_LIMITS[0],
    )
    return _assemble("drawer", _open_front_body(p), tray, "drawer", handle, joint)


_BUILDERS = {
    "cabinet_door": _cabinet_door,
    "drawer": _drawer,
    "box_lid": _box_lid,
    "bin_swing_lid": _bin_swing_lid,
}


def coerce_params(params: ProceduralParams | dict | None) -> ProceduralParams:
    if isinstance(params, ProceduralParams):
        return params
    try:
        return ProceduralParams.model_validate(params or {})
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise InvalidParameterError(f"{where}: {first['msg']}") from exc


def generate_procedural(
    kind: ObjectKind,
    params: ProceduralParams | dict | None = None,
    rng_seed: int | np.random.Generator = 0,
) -> ArticulatedObject:
    """
    Build a procedural object of ``kind``.

    The seed jitters handle placement and length. Drawers ignore
    ``hinge_side``; lids read "top" as the back edge.
    """
    if kind not in _BUILDERS:
        raise InvalidParameterError(f"unknown object kind {kind!r}")
    p = coerce_params(params)
    style = p.handle or DEFAULT_HANDLE[kind]
    return _BUILDERS[kind](p, style, as_generator(rng_seed))


def random_params(
    kind: ObjectKind, rng_seed: int | np.random.Generator
) -> ProceduralParams:
    """Draw desk-scale parameters for ``kind``."""
    rng = as_generator(rng_seed)
    hinge: HingeSide
    if kind == "cabinet_door":
        hinge = "left" if rng.random() < 0.5 else "right"
    else:
        hinge = "top"
    return ProceduralParams(
        width=float(rng.uniform(0.3, 0.7)),
        height=float(rng.uniform(0.3, 0.7)),
        depth=float(rng.uniform(0.3, 0.6)),
        handle_radius=float(rng.uniform(0.006, 0.012)),
        hinge_side=hinge,
    )
