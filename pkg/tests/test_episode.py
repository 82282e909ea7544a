import json
import math

import numpy as np
import pytest

from core.articulated import ArticulatedObject, Joint, JointState, parse_object
from core.config import EpisodeConfig, GripperModel
from core.episode import (
    ContactReport,
    FingerContact,
    check_spawn_collision,
    close_gripper,
    holds_in_friction_cone,
    optimal_direction,
    run_episode,
)
from core.errors import ZeroMomentArmError
from core.mesh import box_mesh
from core.sampler import Grasp

# closing along x, approach along +y
SIDE_GRIP = np.column_stack([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def slab(name: str, tag: str, center, **extra) -> dict:
    vertices, triangles = box_mesh(np.asarray(center), np.array([0.01, 0.1, 0.1]))
    return {
        "name": name,
        "tag": tag,
        "vertices": vertices.tolist(),
        "triangles": triangles.tolist(),
        **extra,
    }


def slab_door_document(upper_limit: float = 1.5708) -> dict:
    """A fixed 2 cm slab and a 2 cm door slab hinged at its +y edge."""
    return {
        "name": "slabs",
        "links": [
            slab("frame", "base", (0.0, 0.4, 0.1)),
            slab("door", "movable", (0.0, -0.2, 0.1)),
        ],
        "joints": [
            {
                "name": "hinge",
                "type": "revolute",
                "parent": "frame",
                "child": "door",
                "axis": [0.0, 0.0, 1.0],
                "origin": [0.0, -0.1, 0.0],
                "limits": [0.0, upper_limit],
                "closed_value": 0.0,
            }
        ],
    }


def slab_door(upper_limit: float = 1.5708) -> ArticulatedObject:
    return parse_object(json.dumps(slab_door_document(upper_limit)))


@pytest.fixture
def slabs() -> ArticulatedObject:
    return slab_door()


def grasp_at(t) -> Grasp:
    return Grasp(t=np.asarray(t, dtype=np.float64), R=SIDE_GRIP)


# fingertips 2 cm past the door's free edge
DOOR_GRASP = (0.0, -0.32, 0.1)
FRAME_GRASP = (0.0, 0.28, 0.1)


def test_far_gripper_does_not_collide(slabs: ArticulatedObject):
    grasp = grasp_at((1.0, 1.0, 1.0))
    assert not check_spawn_collision(
        slabs, JointState.closed(slabs), grasp, GripperModel()
    )


def test_gripper_spawned_through_the_door_collides(slabs: ArticulatedObject):
    # Arrange
    grasp = Grasp(t=np.array([0.0, -0.2, 0.1]), R=np.eye(3))

    # Act / Assert
    assert check_spawn_collision(
        slabs, JointState.closed(slabs), grasp, GripperModel()
    )


def test_fingers_close_on_opposite_faces(slabs: ArticulatedObject):
    # Act
    report = close_gripper(
        slabs, JointState.closed(slabs), grasp_at(DOOR_GRASP), GripperModel()
    )

    # Assert
    assert report.complete
    first, second = report.fingers
    assert first is not None and second is not None
    assert first.link == second.link == "door"
    np.testing.assert_allclose(first.normal, [1.0, 0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(second.normal, [-1.0, 0.0, 0.0], atol=1e-9)
    assert first.point[0] == pytest.approx(0.01, abs=1e-4)
    assert second.point[0] == pytest.approx(-0.01, abs=1e-4)
    assert first.half_gap == pytest.approx(0.01, abs=1e-4)


def test_gripper_in_free_space_reports_no_contacts(slabs: ArticulatedObject):
    # Act
    report = close_gripper(
        slabs, JointState.closed(slabs), grasp_at((1.0, 1.0, 1.0)), GripperModel()
    )

    # Assert
    assert report.contacts == []
    assert not report.complete


def test_prismatic_direction_follows_the_opening_sign(slabs: ArticulatedObject):
    # Arrange
    joint = Joint(
        name="slide",
        type="prismatic",
        parent="frame",
        child="door",
        axis=np.array([1.0, 0.0, 0.0]),
        origin=np.zeros(3),
        limits=(0.0, 0.3),
        closed_value=0.0,
    )

    # Act / Assert
    np.testing.assert_allclose(
        optimal_direction(slabs, joint, np.array([0.5, 0.5, 0.5])), [1.0, 0.0, 0.0]
    )


def test_revolute_direction_is_tangent_to_the_swing(slabs: ArticulatedObject):
    # Arrange
    joint = Joint(
        name="hinge",
        type="revolute",
        parent="frame",
        child="door",
        axis=np.array([0.0, 0.0, 1.0]),
        origin=np.zeros(3),
        limits=(0.0, 1.5),
        closed_value=0.0,
    )
    centroid = np.array([1.0, 0.0, 0.3])

    # Act
    direction = optimal_direction(slabs, joint, centroid)

    # Assert
    np.testing.assert_allclose(direction, [0.0, 1.0, 0.0], atol=1e-12)
    assert abs(direction @ np.array([1.0, 0.0, 0.0])) < 1e-9


def test_centroid_on_the_axis_has_no_moment_arm(slabs: ArticulatedObject):
    joint = slabs.target_joint()
    with pytest.raises(ZeroMomentArmError):
        _ = optimal_direction(slabs, joint, np.array([0.0, -0.1, 0.4]))


@pytest.mark.parametrize(
    ("tilt_deg", "expected"),
    [
        pytest.param(10.0, True, id="inside-cone"),
        pytest.param(80.0, False, id="far-outside-cone"),
    ],
)
def test_friction_cone_hold(tilt_deg: float, expected: bool):
    # Arrange
    contacts = ContactReport(
        fingers=(
            FingerContact("door", np.zeros(3), np.array([1.0, 0.0, 0.0]), 0.01),
            FingerContact("door", np.zeros(3), np.array([-1.0, 0.0, 0.0]), 0.01),
        )
    )
    tilt = math.radians(tilt_deg)
    closing = np.array([math.cos(tilt), 0.0, math.sin(tilt)])

    # Act / Assert
    assert holds_in_friction_cone(contacts, closing, 20.0) is expected


def test_missing_contact_never_holds():
    contacts = ContactReport(
        fingers=(FingerContact("door", np.zeros(3), np.array([1.0, 0, 0]), 0.0), None)
    )
    assert not holds_in_friction_cone(contacts, np.array([1.0, 0.0, 0.0]), 20.0)


def test_grasp_on_the_door_edge_opens_it(slabs: ArticulatedObject):
    # Act
    result = run_episode(
        slabs,
        JointState.closed(slabs),
        grasp_at(DOOR_GRASP),
        GripperModel(),
        EpisodeConfig(),
    )

    # Assert
    assert result.success
    assert result.failure_reason is None
    assert result.displacement == pytest.approx(math.radians(30.0))
    assert result.steps_completed == 60
    assert result.direction is not None
    np.testing.assert_allclose(result.direction, [1.0, 0.0, 0.0], atol=1e-6)


def test_grasp_on_the_base_is_the_wrong_link(slabs: ArticulatedObject):
    # Act
    result = run_episode(
        slabs,
        JointState.closed(slabs),
        grasp_at(FRAME_GRASP),
        GripperModel(),
        EpisodeConfig(),
    )

    # Assert
    assert not result.success
    assert result.failure_reason == "wrong_link"
    assert all(contact.link == "frame" for contact in result.contacts.contacts)


@pytest.mark.parametrize(
    ("t", "reason"),
    [
        pytest.param((0.0, -0.2, 0.1), "spawn_collision", id="inside-door"),
        pytest.param((1.0, 1.0, 1.0), "no_contact_on_close", id="free-space"),
    ],
)
def test_early_failures(slabs: ArticulatedObject, t, reason: str):
    # Act
    result = run_episode(
        slabs, JointState.closed(slabs), grasp_at(t), GripperModel(), EpisodeConfig()
    )

    # Assert
    assert result.failure_reason == reason
    assert result.displacement == 0.0


def test_joint_limit_caps_the_displacement():
    # Arrange
    obj = slab_door(upper_limit=0.1)

    # Act
    result = run_episode(
        obj,
        JointState.closed(obj),
        grasp_at(DOOR_GRASP),
        GripperModel(),
        EpisodeConfig(),
    )

    # Assert
    assert result.failure_reason == "insufficient_displacement"
    assert result.displacement == pytest.approx(0.1)


@pytest.mark.parametrize("threshold_deg", [10.0, 15.0, 29.0, 31.0, 45.0])
def test_raising_the_threshold_never_creates_a_success(
    slabs: ArticulatedObject, threshold_deg: float
):
    # Arrange
    state = JointState.closed(slabs)
    grasp = grasp_at(DOOR_GRASP)

    # Act
    lower = run_episode(
        slabs, state, grasp, GripperModel(), EpisodeConfig(success_revolute_deg=10.0)
    )
    higher = run_episode(
        slabs,
        state,
        grasp,
        GripperModel(),
        EpisodeConfig(success_revolute_deg=threshold_deg),
    )

    # Assert
    assert higher.success <= lower.success
    assert higher.success is (threshold_deg <= 30.0)


def test_episodes_are_deterministic(slabs: ArticulatedObject):
    # Arrange
    state = JointState.closed(slabs)

    # Act
    first = run_episode(
        slabs, state, grasp_at(DOOR_GRASP), GripperModel(), EpisodeConfig()
    )
    second = run_episode(
        slabs, state, grasp_at(DOOR_GRASP), GripperModel(), EpisodeConfig()
    )

    # Assert
    assert first.label == second.label
    assert first.displacement == second.displacement
    for a, b in zip(first.contacts.contacts, second.contacts.contacts, strict=True):
        np.testing.assert_array_equal(a.point, b.point)


def door_with_stop() -> ArticulatedObject:
    """The slab door plus a fixed block in the gripper's swing, clear of the door."""
    vertices, triangles = box_mesh(
        np.array([0.11, -0.34, 0.1]), np.array([0.02, 0.03, 0.05])
    )
    document = slab_door_document()
    document["links"].append(
        {
            "name": "stop",
            "tag": "base",
            "vertices": vertices.tolist(),
            "triangles": triangles.tolist(),
            "parent": "frame",
        }
    )
    return parse_object(json.dumps(document))


def test_fixed_link_in_the_swing_stops_the_episode():
    # Arrange
    obj = door_with_stop()

    # Act
    result = run_episode(
        obj,
        JointState.closed(obj),
        grasp_at(DOOR_GRASP),
        GripperModel(),
        EpisodeConfig(),
    )

    # Assert
    assert result.failure_reason == "slip_during_motion"
    assert 0.0 < result.displacement < math.radians(15.0)
    assert 0 < result.steps_completed < 30
