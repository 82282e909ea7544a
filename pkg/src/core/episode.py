"""
Quasi-static grasp episodes.

An episode spawns the open gripper at a grasp pose, closes it, checks an
antipodal friction-cone hold, then actuates the target joint step by step
with the gripper rigidly attached to the grasped link.

Gripper frame: x is the closing axis, z the approach axis, y = z x x. The
fingers slide along x; their tips sit at ``tip_depth`` along z.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from core.articulated import ArticulatedObject, Joint, JointState, posed_joint
from core.collision import OrientedBox, PosedScene
from core.config import EpisodeConfig, GripperModel
from core.errors import ZeroMomentArmError
from core.mesh import closest_points_on_triangles, triangle_normals
from core.sampler import Grasp

logger = logging.getLogger(__name__)

FailureReason = Literal[
    "spawn_collision",
    "no_contact_on_close",
    "wrong_link",
    "slip_during_motion",
    "insufficient_displacement",
]
FAILURE_REASONS: tuple[FailureReason, ...] = (
    "spawn_collision",
    "no_contact_on_close",
    "wrong_link",
    "slip_during_motion",
    "insufficient_displacement",
)

# Finger sides: +1 starts on the +x side and closes toward -x.
FINGER_SIDES = (1.0, -1.0)
BISECT_TOLERANCE = 1e-5
_MOMENT_ARM_EPSILON = 1e-9


def finger_box(
    grasp: Grasp, gripper: GripperModel, side: float, half_gap: float
) -> OrientedBox:
    """Finger whose inner face is ``half_gap`` from the grasp axis."""
    local = np.array(
        [
            side * (half_gap + gripper.finger_thickness / 2),
            0.0,
            gripper.tip_depth - gripper.finger_length / 2,
        ]
    )
    return OrientedBox(
        center=grasp.t + grasp.R @ local,
        rotation=grasp.R,
        half_extents=np.array(
            [
                gripper.finger_thickness / 2,
                gripper.finger_width / 2,
                gripper.finger_length / 2,
            ]
        ),
    )


def palm_box(grasp: Grasp, gripper: GripperModel) -> OrientedBox:
    depth = gripper.tip_depth - gripper.finger_length - gripper.palm_depth / 2
    return OrientedBox(
        center=grasp.t + grasp.R @ np.array([0.0, 0.0, depth]),
        rotation=grasp.R,
        half_extents=np.array(
            [
                gripper.max_opening / 2 + gripper.finger_thickness,
                gripper.palm_width / 2,
                gripper.palm_depth / 2,
            ]
        ),
    )


def gripper_boxes(
    grasp: Grasp, gripper: GripperModel, half_gaps: tuple[float, float] | None = None
) -> list[OrientedBox]:
    gaps = half_gaps or (gripper.max_opening / 2, gripper.max_opening / 2)
    return [
        palm_box(grasp, gripper),
        *(
            finger_box(grasp, gripper, side, gap)
            for side, gap in zip(FINGER_SIDES, gaps, strict=True)
        ),
    ]


@dataclass(frozen=True, eq=False)
class FingerContact:
    link: str
    point: np.ndarray
    normal: np.ndarray
    half_gap: float


@dataclass(frozen=True, eq=False)
class ContactReport:
    """Per-finger contacts in ``FINGER_SIDES`` order; ``None`` means no contact."""

    fingers: tuple[FingerContact | None, FingerContact | None]

    @property
    def complete(self) -> bool:
        return all(contact is not None for contact in self.fingers)

    @property
    def contacts(self) -> list[FingerContact]:
        return [contact for contact in self.fingers if contact is not None]

    def centroid(self) -> np.ndarray:
        return np.mean([contact.point for contact in self.contacts], axis=0)

    def half_gaps(self, gripper: GripperModel) -> tuple[float, float]:
        opening = gripper.max_opening / 2
        first, second = (
            contact.half_gap if contact is not None else opening
            for contact in self.fingers
        )
        return first, second


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    label: Literal["success", "failure"]
    failure_reason: FailureReason | None
    displacement: float
    contacts: ContactReport = field(
        default_factory=lambda: ContactReport(fingers=(None, None))
    )
    steps_completed: int = 0
    direction: np.ndarray | None = None

    @property
    def success(self) -> bool:
        return self.label == "success"


def check_spawn_collision(
    obj: ArticulatedObject,
    state: JointState,
    grasp: Grasp,
    gripper: GripperModel,
    scene: PosedScene | None = None,
) -> bool:
    """True iff the fully open gripper intersects any posed link."""
    scene = scene or PosedScene(obj, state)
    return scene.any_collision(gripper_boxes(grasp, gripper))


def _finger_contact(
    scene: PosedScene, box: OrientedBox, grasp: Grasp, side: float, half_gap: float
) -> FingerContact | None:
    """
    Contact between a finger and the scene.

    Among intersecting triangles the one facing the finger's motion most
    directly wins, then the nearest to the pad centre, then the lower link and
    triangle index.
    """
    moving = -side * grasp.closing_axis
    pad_center = box.center - side * grasp.closing_axis * box.half_extents[0]
    best: tuple[float, float, int, int] | None = None
    best_contact: FingerContact | None = None
    for link_index, link in enumerate(scene.obj.link_names):
        triangles = scene.intersecting_triangles(box, link)
        if len(triangles) == 0:
            continue
        corners = scene.corners[link][triangles]
        normals = triangle_normals(corners)
        points, distances = closest_points_on_triangles(pad_center, corners)
        facing = -(normals @ moving)
        for i, triangle in enumerate(triangles):
            key = (
                -round(float(facing[i]), 9),
                float(distances[i]),
                link_index,
                int(triangle),
            )
            if best is None or key < best:
                normal = normals[i] if facing[i] >= 0 else -normals[i]
                best = key
                best_contact = FingerContact(
                    link=link, point=points[i], normal=normal, half_gap=half_gap
                )
    return best_contact


def close_gripper(
    obj: ArticulatedObject,
    state: JointState,
    grasp: Grasp,
    gripper: GripperModel,
    scene: PosedScene | None = None,
) -> ContactReport:
    """
    Close each finger in ``stroke_resolution`` steps until it touches a link,
    then bisect the last free and first touching positions.
    """
    scene = scene or PosedScene(obj, state)
    start = gripper.max_opening / 2
    strokes = math.ceil(start / gripper.stroke_resolution)
    contacts: list[FingerContact | None] = []
    for side in FINGER_SIDES:
        free = start
        hit: float | None = None
        for step in range(1, strokes + 1):
            gap = max(0.0, start - step * gripper.stroke_resolution)
            if scene.any_collision([finger_box(grasp, gripper, side, gap)]):
                hit = gap
                break
            free = gap
        if hit is None:
            contacts.append(None)
            continue
        while free - hit > BISECT_TOLERANCE:
            middle = (free + hit) / 2
            if scene.any_collision([finger_box(grasp, gripper, side, middle)]):
                hit = middle
            else:
                free = middle
        box = finger_box(grasp, gripper, side, hit)
        contacts.append(_finger_contact(scene, box, grasp, side, hit))
    return ContactReport(fingers=(contacts[0], contacts[1]))


def optimal_direction(
    obj: ArticulatedObject, joint: Joint, contact_centroid: np.ndarray
) -> np.ndarray:
    """
    Instantaneous direction that opens ``joint`` at ``contact_centroid``.

    ``joint`` must be expressed in the world frame of the current state.
    """
    sign = joint.opening_sign
    if joint.type == "prismatic":
        return sign * joint.axis
    offset = np.asarray(contact_centroid, dtype=np.float64) - joint.origin
    foot = joint.origin + (offset @ joint.axis) * joint.axis
    radius = contact_centroid - foot
    if np.linalg.norm(radius) < _MOMENT_ARM_EPSILON:
        raise ZeroMomentArmError()
    tangent = np.cross(joint.axis, radius)
    return sign * tangent / np.linalg.norm(tangent)


def holds_in_friction_cone(
    contacts: ContactReport, closing_axis: np.ndarray, half_angle_deg: float
) -> bool:
    """Closing axis within the friction half-angle of both contact normals."""
    cos_limit = math.cos(math.radians(half_angle_deg))
    for side, contact in zip(FINGER_SIDES, contacts.fingers, strict=True):
        if contact is None:
            return False
        if float(contact.normal @ (side * closing_axis)) < cos_limit - 1e-12:
            return False
    return True


def contacts_on_pads(
    contacts: ContactReport, grasp: Grasp, gripper: GripperModel, tolerance: float
) -> bool:
    """Every contact point lies on its finger's inner pad within ``tolerance``."""
    tip = gripper.tip_depth
    for side, contact in zip(FINGER_SIDES, contacts.fingers, strict=True):
        if contact is None:
            return False
        x, y, z = grasp.R.T @ (contact.point - grasp.t)
        if abs(x - side * contact.half_gap) > tolerance:
            return False
        if abs(y) > gripper.finger_width / 2 + tolerance:
            return False
        if not tip - gripper.finger_length - tolerance <= z <= tip + tolerance:
            return False
    return True


def _holds(
    contacts: ContactReport, grasp: Grasp, gripper: GripperModel, cfg: EpisodeConfig
) -> bool:
    return holds_in_friction_cone(
        contacts, grasp.closing_axis, gripper.friction_half_angle_deg
    ) and contacts_on_pads(contacts, grasp, gripper, cfg.contact_tolerance)


def _moved_grasp(grasp: Grasp, transform: np.ndarray) -> Grasp:
    return Grasp(
        t=transform[:3, :3] @ grasp.t + transform[:3, 3],
        R=transform[:3, :3] @ grasp.R,
        contact_point_index=grasp.contact_point_index,
        provenance=grasp.provenance,
    )


def _failure(
    reason: FailureReason,
    displacement: float = 0.0,
    contacts: ContactReport | None = None,
    steps: int = 0,
    direction: np.ndarray | None = None,
) -> EpisodeResult:
    return EpisodeResult(
        label="failure",
        failure_reason=reason,
        displacement=displacement,
        contacts=contacts or ContactReport(fingers=(None, None)),
        steps_completed=steps,
        direction=direction,
    )


def run_episode(
    obj: ArticulatedObject,
    state: JointState,
    grasp: Grasp,
    gripper: GripperModel,
    cfg: EpisodeConfig,
    joint_name: str | None = None,
) -> EpisodeResult:
    """Label one grasp; every outcome is a result, never an exception."""
    joint = obj.target_joint(joint_name)
    scene = PosedScene(obj, state)
    if check_spawn_collision(obj, state, grasp, gripper, scene):
        return _failure("spawn_collision")

    contacts = close_gripper(obj, state, grasp, gripper, scene)
    if not contacts.complete:
        return _failure("no_contact_on_close", contacts=contacts)
    moving = obj.moving_links(joint.name)
    if any(contact.link not in moving for contact in contacts.contacts):
        return _failure("wrong_link", contacts=contacts)
    if not _holds(contacts, grasp, gripper, cfg):
        return _failure("slip_during_motion", contacts=contacts)

    world_joint = posed_joint(obj, state, joint.name)
    try:
        direction = optimal_direction(obj, world_joint, contacts.centroid())
    except ZeroMomentArmError:
        return _failure("insufficient_displacement", contacts=contacts)

    if joint.type == "revolute":
        step_size = math.radians(cfg.revolute_step_deg)
        threshold = math.radians(cfg.success_revolute_deg)
    else:
        step_size = cfg.prismatic_step
        threshold = cfg.success_prismatic

    # Links moved by the joint keep their pose relative to the gripper and the
    # contacts move with it, so only the remaining links can block the motion.
    grasped_link = contacts.contacts[0].link
    static_links = [name for name in obj.link_names if name not in moving]
    half_gaps = contacts.half_gaps(gripper)
    q0 = state[joint.name]
    start_inverse = np.linalg.inv(scene.transforms[grasped_link])
    displacement = 0.0
    steps = 0
    for step in range(1, cfg.steps + 1):
        q = joint.clamp(q0 + joint.opening_sign * step * step_size)
        travelled = abs(q - q0)
        if travelled <= displacement:
            break
        stepped = PosedScene(obj, state.with_value(joint.name, q))
        motion = stepped.transforms[grasped_link] @ start_inverse
        boxes = gripper_boxes(_moved_grasp(grasp, motion), gripper, half_gaps)
        if stepped.any_collision(boxes, static_links):
            return _failure(
                "slip_during_motion", displacement, contacts, steps, direction
            )
        displacement = travelled
        steps = step

    if displacement >= threshold - 1e-9:
        return EpisodeResult(
            label="success",
            failure_reason=None,
            displacement=displacement,
            contacts=contacts,
            steps_completed=steps,
            direction=direction,
        )
    return _failure(
        "insufficient_displacement", displacement, contacts, steps, direction
    )
