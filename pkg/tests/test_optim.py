import numpy as np
import pytest

from core.config import OptimizerConfig
from core.optim import Adam, step_learning_rate


def test_learning_rate_decays_in_steps():
    cfg = OptimizerConfig(learning_rate=1.0, gamma=0.5, step_size=2)
    rates = [step_learning_rate(cfg, step) for step in range(6)]
    assert rates == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]


def test_published_schedule_defaults():
    cfg = OptimizerConfig()
    assert step_learning_rate(cfg, 4999) == pytest.approx(1e-4)
    assert step_learning_rate(cfg, 5000) == pytest.approx(0.9e-4)


def test_first_step_moves_each_parameter_by_the_learning_rate():
    # Arrange
    cfg = OptimizerConfig(learning_rate=0.01, weight_decay=0.0)
    params = {"w": np.array([1.0, -2.0, 3.0])}
    grads = {"w": np.array([0.5, -4.0, 1e-3])}
    optimizer = Adam(params, cfg)

    # Act
    optimizer.step(params, grads)

    # Assert
    np.testing.assert_allclose(params["w"], [0.99, -1.99, 2.99], atol=1e-6)
    assert optimizer.step_count == 1


def test_weight_decay_shrinks_parameters_without_gradient():
    # Arrange
    cfg = OptimizerConfig(learning_rate=0.01, weight_decay=0.1)
    params = {"w": np.array([1.0, -1.0])}
    optimizer = Adam(params, cfg)

    # Act
    for _ in range(10):
        optimizer.step(params, {"w": np.zeros(2)})

    # Assert
    assert np.all(np.abs(params["w"]) < 1.0)
    assert params["w"][0] == pytest.approx(-params["w"][1])


def test_updates_happen_in_place_and_keep_the_dtype():
    # Arrange
    weight = np.ones(4, dtype=np.float32)
    params = {"w": weight}
    optimizer = Adam(params, OptimizerConfig())

    # Act
    optimizer.step(params, {"w": np.ones(4, dtype=np.float32)})

    # Assert
    assert params["w"] is weight
    assert weight.dtype == np.float32
    assert np.all(weight < 1.0)


def test_minimises_a_quadratic():
    # Arrange
    cfg = OptimizerConfig(learning_rate=0.05, weight_decay=0.0)
    params = {"x": np.array([2.0, -3.0])}
    optimizer = Adam(params, cfg)

    # Act
    for _ in range(500):
        optimizer.step(params, {"x": 2.0 * params["x"]})

    # Assert
    assert np.linalg.norm(params["x"]) < 0.1
