"""Exception hierarchy shared by every toolkit module."""


class AOGraspError(Exception):
    """Base class for all toolkit errors."""


class EmptyInputError(AOGraspError):
    def __init__(self, message: str = "empty input"):
        super().__init__(message)


class InvalidParameterError(AOGraspError):
    """A caller-supplied parameter is outside its documented range."""


class MissingAttributeError(AOGraspError):
    """A point cloud lacks an attribute the operation needs."""


class ObjectSpecError(AOGraspError):
    """An object document failed validation.

    Attributes:
        path: JSON path of the offending value, e.g. ``$.joints[0].limits``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class KinematicCycleError(ObjectSpecError):
    def __init__(self, where: str):
        super().__init__("$.joints", f"kinematic cycle at {where}")
        self.where = where


class MissingJointError(AOGraspError):
    def __init__(self, joint: str):
        super().__init__(f"joint state is missing joint {joint!r}")
        self.joint = joint


class NotVisibleError(AOGraspError):
    def __init__(self, message: str = "object not visible"):
        super().__init__(message)


class ZeroMomentArmError(AOGraspError):
    def __init__(self, message: str = "zero moment arm"):
        super().__init__(message)


class NoLabelsError(AOGraspError):
    def __init__(self, message: str = "no labels"):
        super().__init__(message)


class TrainingDivergedError(AOGraspError):
    def __init__(self, step: int, term: str):
        super().__init__(f"non-finite loss at step {step} in term {term!r}")
        self.step = step
        self.term = term


class CheckpointMismatchError(AOGraspError):
    """Checkpoint and runtime configurations disagree."""

    def __init__(self, checkpoint_config: str, runtime_config: str):
        super().__init__(
            "checkpoint config does not match runtime config: "
            f"checkpoint={checkpoint_config} runtime={runtime_config}"
        )


class DatasetError(AOGraspError):
    """A manifest or dataset file is missing or inconsistent."""
