"""
Toolkit configuration models.

Every tunable lives in one pydantic model per module, grouped under
:class:`ToolkitConfig`. Field descriptions tag each default as either
``published`` (a value reported for the original method) or
``toolkit choice``.
"""

import json
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import InvalidParameterError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryConfig(_Section):
    curvature_neighbors: int = Field(
        default=20, ge=3, description="toolkit choice: PCA neighbourhood size"
    )


class ViewpointRange(_Section):
    yaw_span_deg: float = Field(
        default=120.0, ge=0.0, description="published: yaw range about the front"
    )
    pitch_span_deg: float = Field(
        default=10.0, ge=0.0, description="published: pitch range"
    )
    elevation_deg: float = Field(
        default=20.0,
        ge=-89.0,
        le=89.0,
        description="toolkit choice: centre of the pitch range above horizontal",
    )
    distance_range: tuple[float, float] = Field(
        default=(1.2, 1.8), description="toolkit choice: camera distance in meters"
    )

    @model_validator(mode="after")
    def _check_distance(self) -> "ViewpointRange":
        low, high = self.distance_range
        if not 0.0 < low <= high:
            raise ValueError("distance_range must satisfy 0 < low <= high")
        return self


class RenderConfig(_Section):
    width: int = Field(default=160, ge=1, description="toolkit choice")
    height: int = Field(default=120, ge=1, description="toolkit choice")
    fov_deg: float = Field(
        default=60.0, gt=0.0, lt=180.0, description="toolkit choice: vertical FOV"
    )
    max_points: int = Field(
        default=4096, ge=1, description="published: 4K-point network input"
    )
    correspondence_epsilon: float = Field(
        default=0.005, gt=0.0, description="toolkit choice: 5 mm match radius"
    )
    depth_noise_std: float = Field(
        default=0.0, ge=0.0, description="toolkit choice: Gaussian depth jitter"
    )
    viewpoints: ViewpointRange = ViewpointRange()


class SamplingConfig(_Section):
    omega: float = Field(default=1.0, ge=0.0, description="published: curvature weight")
    tau: float = Field(default=0.1, gt=0.0, description="published: temperature")
    semantic_fraction: float = Field(
        default=0.5, ge=0.0, le=1.0, description="toolkit choice"
    )
    cone_half_angle_deg: float = Field(
        default=30.0, ge=0.0, lt=90.0, description="toolkit choice"
    )
    standoff_range: tuple[float, float] = Field(
        default=(0.0, 0.02), description="toolkit choice: meters behind the surface"
    )
    semantic_perturbation_deg: float = Field(
        default=15.0, ge=0.0, le=180.0, description="toolkit choice"
    )

    @model_validator(mode="after")
    def _check_standoff(self) -> "SamplingConfig":
        low, high = self.standoff_range
        if not 0.0 <= low <= high:
            raise ValueError("standoff_range must satisfy 0 <= low <= high")
        return self


class GripperModel(_Section):
    """Parallel-jaw gripper approximating a two-finger industrial hand."""

    max_opening: float = Field(default=0.085, gt=0.0, description="toolkit choice")
    finger_thickness: float = Field(default=0.01, gt=0.0)
    finger_width: float = Field(default=0.02, gt=0.0)
    finger_length: float = Field(default=0.06, gt=0.0)
    tip_depth: float = Field(
        default=0.04, description="fingertip position along the approach axis"
    )
    palm_depth: float = Field(default=0.03, gt=0.0)
    palm_width: float = Field(default=0.03, gt=0.0)
    stroke_resolution: float = Field(
        default=0.001, gt=0.0, description="toolkit choice: 1 mm closing step"
    )
    friction_half_angle_deg: float = Field(
        default=20.0, ge=0.0, lt=90.0, description="toolkit choice"
    )


class EpisodeConfig(_Section):
    steps: int = Field(default=60, ge=1, description="toolkit choice")
    revolute_step_deg: float = Field(default=0.5, gt=0.0)
    prismatic_step: float = Field(default=0.002, gt=0.0)
    success_revolute_deg: float = Field(
        default=15.0, gt=0.0, description="toolkit choice: success threshold"
    )
    success_prismatic: float = Field(default=0.05, gt=0.0)
    contact_tolerance: float = Field(
        default=0.002, gt=0.0, description="toolkit choice: 2 mm"
    )


class HeatmapConfig(_Section):
    k: int = Field(default=15, ge=1, description="published")
    r: float = Field(default=0.04, gt=0.0, description="published: 4 cm")
    lambda_pos: float = Field(default=2.0, ge=0.0, description="published")
    lambda_neg: float = Field(default=0.0, ge=0.0, description="published")


class EncoderConfig(_Section):
    radii: tuple[float, ...] = Field(
        default=(0.1, 0.2, 0.4, 0.8), description="published: ball query radii"
    )
    nsamples: tuple[int, ...] = Field(
        default=(32, 32, 32, 32), description="published: samples per ball"
    )
    widths: tuple[int, ...] = Field(
        default=(32, 32, 32, 32), description="toolkit choice: per-scale width"
    )
    feature_dim: int = Field(default=32, ge=1, description="toolkit choice")
    head_hidden: int = Field(default=32, ge=1, description="toolkit choice")
    frame: Literal["camera", "world"] = Field(
        default="camera", description="coordinates the cloud is centred in"
    )
    precision: Literal["float64", "float32"] = "float64"

    @model_validator(mode="after")
    def _check_scales(self) -> "EncoderConfig":
        if not self.radii:
            raise ValueError("at least one radius is required")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise ValueError("radii must be strictly increasing")
        if self.radii[0] <= 0:
            raise ValueError("radii must be positive")
        if not len(self.radii) == len(self.nsamples) == len(self.widths):
            raise ValueError("radii, nsamples and widths must have equal length")
        if min(self.nsamples) < 1 or min(self.widths) < 1:
            raise ValueError("nsamples and widths must be >= 1")
        return self


class ContrastiveConfig(_Section):
    pairs: int = Field(default=64, ge=1, description="published: |Z|")
    negatives: int = Field(default=10, ge=1, description="published: |N|")
    margin_pos: float = Field(default=0.1, ge=0.0, description="published")
    margin_neg: float = Field(default=1.4, ge=0.0, description="published")


class OptimizerConfig(_Section):
    learning_rate: float = Field(default=1e-4, gt=0.0, description="published")
    weight_decay: float = Field(default=1e-6, ge=0.0, description="published")
    gamma: float = Field(default=0.9, gt=0.0, le=1.0, description="published")
    step_size: int = Field(default=5000, ge=1, description="published")
    batch_size: int = Field(default=64, ge=1, description="published")
    epochs: int = Field(default=200, ge=1, description="published")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class LossWeights(_Section):
    hc: float = Field(default=3.0, ge=0.0, description="published: lambda_HC")
    mse: float = Field(default=1.0, ge=0.0, description="published: lambda_MSE")


class InstanceRecipe(_Section):
    """One dataset instance: a procedural recipe or an object document."""

    id: str
    kind: Literal["cabinet_door", "drawer", "box_lid", "bin_swing_lid"] | None = None
    object_path: str | None = None
    params: dict[str, float | str] = {}
    seed: int = 0
    split: Literal["train", "test"] = "train"
    joint: str | None = None

    @model_validator(mode="after")
    def _check_source(self) -> "InstanceRecipe":
        if (self.kind is None) == (self.object_path is None):
            raise ValueError("exactly one of kind or object_path is required")
        return self


class DatasetConfig(_Section):
    instances: tuple[InstanceRecipe, ...] = ()
    open_states: int = Field(default=9, ge=0, description="published: 9 open states")
    views_per_state: int = Field(
        default=20, ge=1, description="published: 20 viewpoints per state"
    )
    candidates_per_cloud: int = Field(default=200, ge=0, description="toolkit choice")
    seed: int = 0


class TrainConfig(_Section):
    pretrain: bool = True
    pretrain_epochs: int | None = Field(
        default=None, ge=1, description="defaults to optimizer.epochs"
    )
    sparse_labels: bool = False
    seed: int = 0


class EvaluationConfig(_Section):
    top_k: int = Field(default=10, ge=1, description="published: top-10")
    distance_bins: int = Field(default=3, ge=1, description="toolkit choice")
    yaw_bins: int = Field(default=3, ge=1, description="toolkit choice")
    nms_radius: float | None = Field(
        default=None, gt=0.0, description="toolkit choice: off by default"
    )
    seed: int = 0


class ToolkitConfig(_Section):
    geometry: GeometryConfig = GeometryConfig()
    render: RenderConfig = RenderConfig()
    sampling: SamplingConfig = SamplingConfig()
    gripper: GripperModel = GripperModel()
    episode: EpisodeConfig = EpisodeConfig()
    heatmap: HeatmapConfig = HeatmapConfig()
    encoder: EncoderConfig = EncoderConfig()
    contrastive: ContrastiveConfig = ContrastiveConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    loss_weights: LossWeights = LossWeights()
    dataset: DatasetConfig = DatasetConfig()
    train: TrainConfig = TrainConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    workers: int = Field(default=1, ge=1)


def parse_config(text: str, suffix: str = ".toml") -> ToolkitConfig:
    if suffix == ".toml":
        data = tomllib.loads(text)
    elif suffix == ".json":
        data = json.loads(text)
    else:
        raise InvalidParameterError(f"unsupported config format {suffix!r}")
    return ToolkitConfig.model_validate(data)


def load_config(path: Path) -> ToolkitConfig:
    """Load a TOML or JSON config file; missing sections take defaults."""
    return parse_config(path.read_text(encoding="utf-8"), path.suffix.lower())
