"""Shared fixtures: small clouds, objects and one tiny generated dataset."""

import asyncio
import shutil
from pathlib import Path

import numpy as np
import pytest

from core.articulated import ArticulatedObject
from core.config import (
    DatasetConfig,
    EncoderConfig,
    EvaluationConfig,
    InstanceRecipe,
    OptimizerConfig,
    RenderConfig,
    ToolkitConfig,
    TrainConfig,
)
from core.geometry import PointCloud
from core.procedural import generate_procedural
from pipeline.densify import densify_manifest
from pipeline.gen_dataset import generate_dataset
from pipeline.train import train_from_manifest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def plane_cloud(n_side: int = 12, spacing: float = 0.01) -> PointCloud:
    """Grid on z = 0 with upward normals and zero curvature."""
    xs, ys = np.meshgrid(np.arange(n_side) * spacing, np.arange(n_side) * spacing)
    points = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
    return PointCloud(points=points, normals=normals, curvature=np.zeros(len(points)))


@pytest.fixture
def plane() -> PointCloud:
    return plane_cloud()


@pytest.fixture
def cabinet() -> ArticulatedObject:
    return generate_procedural("cabinet_door", {"hinge_side": "right"}, 1)


@pytest.fixture
def small_encoder() -> EncoderConfig:
    return EncoderConfig(
        radii=(0.05, 0.1),
        nsamples=(4, 4),
        widths=(3, 3),
        feature_dim=4,
        head_hidden=3,
    )


def random_surface_cloud(
    rng: np.random.Generator, n: int = 40, extent: float = 0.1
) -> PointCloud:
    """Random points with unit normals and small curvature."""
    normals = rng.normal(size=(n, 3))
    return PointCloud(
        points=rng.uniform(0.0, extent, size=(n, 3)),
        normals=normals / np.linalg.norm(normals, axis=1, keepdims=True),
        curvature=rng.uniform(0.0, 0.3, size=n),
    )


@pytest.fixture
def blob(rng: np.random.Generator) -> PointCloud:
    return random_surface_cloud(rng)


@pytest.fixture(scope="session")
def tiny_config() -> ToolkitConfig:
    """
    Two procedural instances, one per split, two states of two coarse views.

    The coarse render spaces points a few centimeters apart, so the match
    radius is widened to keep cross-view correspondences.
    """
    return ToolkitConfig(
        render=RenderConfig(
            width=48, height=36, max_points=256, correspondence_epsilon=0.05
        ),
        encoder=EncoderConfig(
            radii=(0.05, 0.1),
            nsamples=(4, 4),
            widths=(3, 3),
            feature_dim=4,
            head_hidden=3,
        ),
        optimizer=OptimizerConfig(epochs=2, batch_size=2, learning_rate=1e-3),
        train=TrainConfig(pretrain_epochs=1),
        evaluation=EvaluationConfig(top_k=3),
        dataset=DatasetConfig(
            instances=(
                InstanceRecipe(id="door", kind="cabinet_door", seed=1),
                InstanceRecipe(id="drawer", kind="drawer", seed=2, split="test"),
            ),
            open_states=1,
            views_per_state=2,
            candidates_per_cloud=20,
            seed=3,
        ),
    )


@pytest.fixture(scope="session")
def dataset_dir(
    tiny_config: ToolkitConfig, tmp_path_factory: pytest.TempPathFactory
) -> Path:
    """Generated once per session; tests that write must work on a copy."""
    out = tmp_path_factory.mktemp("dataset")
    _ = asyncio.run(generate_dataset(tiny_config, out, out, workers=1))
    return out


@pytest.fixture(scope="session")
def densified_dir(dataset_dir: Path, tmp_path_factory: pytest.TempPathFactory) -> Path:
    out = tmp_path_factory.mktemp("densified") / "dataset"
    _ = shutil.copytree(dataset_dir, out)
    _ = densify_manifest(out)
    return out


@pytest.fixture(scope="session")
def checkpoint_path(
    densified_dir: Path, tmp_path_factory: pytest.TempPathFactory
) -> Path:
    out = tmp_path_factory.mktemp("model")
    return train_from_manifest(densified_dir, out).checkpoint


@pytest.fixture
def dataset_copy(dataset_dir: Path, tmp_path: Path) -> Path:
    out = tmp_path / "dataset"
    _ = shutil.copytree(dataset_dir, out)
    return out
