import numpy as np
import pytest

from core.config import ContrastiveConfig, LossWeights
from core.errors import InvalidParameterError
from core.losses import (
    ContrastiveBatch,
    hardest_contrastive_loss,
    mse_heatmap_loss,
    sample_contrastive_indices,
    total_loss,
)


def batch_of(features_a, features_b, pairs, negatives_a, negatives_b):
    return ContrastiveBatch(
        features_a=np.asarray(features_a, dtype=np.float64),
        features_b=np.asarray(features_b, dtype=np.float64),
        pairs=np.asarray(pairs),
        negatives_a=np.asarray(negatives_a),
        negatives_b=np.asarray(negatives_b),
    )


def test_positive_term_by_hand():
    # Arrange
    batch = batch_of(
        [[0.0, 0, 0], [10.0, 0, 0]],
        [[0.6, 0, 0], [10.0, 10.0, 0]],
        pairs=[[0, 0]],
        negatives_a=[[1]],
        negatives_b=[[1]],
    )

    # Act
    loss, _, _ = hardest_contrastive_loss(batch)

    # Assert
    assert loss == pytest.approx((0.6 - 0.1) ** 2)


def test_negative_term_by_hand():
    # Arrange
    batch = batch_of(
        [[0.0, 0], [100.0, 0]],
        [[0.0, 0], [0.4, 0], [50.0, 0]],
        pairs=[[0, 0]],
        negatives_a=[[1] + [2] * 9],
        negatives_b=[[1]],
    )

    # Act
    loss, _, _ = hardest_contrastive_loss(batch)

    # Assert
    assert loss == pytest.approx((1.4 - 0.4) ** 2 / (2 * 10))


def test_satisfied_margins_give_zero_loss_and_gradient():
    # Arrange
    batch = batch_of(
        [[0.0, 0], [5.0, 0]],
        [[0.05, 0], [0.0, 5.0]],
        pairs=[[0, 0]],
        negatives_a=[[1]],
        negatives_b=[[1]],
    )

    # Act
    loss, grad_a, grad_b = hardest_contrastive_loss(batch)

    # Assert
    assert loss == 0.0
    assert not grad_a.any()
    assert not grad_b.any()


def test_no_pairs_give_zero_loss():
    # Arrange
    batch = batch_of(
        np.ones((3, 2)), np.ones((4, 2)), np.zeros((0, 2)), [], []
    )

    # Act
    loss, grad_a, grad_b = hardest_contrastive_loss(batch)

    # Assert
    assert loss == 0.0
    assert grad_a.shape == (3, 2)
    assert grad_b.shape == (4, 2)


def random_batch(rng: np.random.Generator) -> ContrastiveBatch:
    n_a, n_b, pairs = 12, 10, 5
    i = rng.choice(n_a, size=pairs, replace=False)
    j = rng.choice(n_b, size=pairs, replace=False)
    negatives_a = np.array(
        [rng.choice(np.setdiff1d(np.arange(n_b), [b]), size=4) for b in j]
    )
    negatives_b = np.array(
        [rng.choice(np.setdiff1d(np.arange(n_a), [a]), size=4) for a in i]
    )
    return ContrastiveBatch(
        features_a=rng.normal(size=(n_a, 3)),
        features_b=rng.normal(size=(n_b, 3)),
        pairs=np.column_stack([i, j]),
        negatives_a=negatives_a,
        negatives_b=negatives_b,
    )


def test_swapping_views_keeps_the_loss(rng: np.random.Generator):
    # Arrange
    batch = random_batch(rng)

    # Act
    loss, grad_a, grad_b = hardest_contrastive_loss(batch)
    swapped, swapped_a, swapped_b = hardest_contrastive_loss(batch.swapped())

    # Assert
    assert swapped == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(swapped_a, grad_b, atol=1e-12)
    np.testing.assert_allclose(swapped_b, grad_a, atol=1e-12)


def test_contrastive_gradients_match_finite_differences(rng: np.random.Generator):
    # Arrange
    batch = random_batch(rng)
    epsilon = 1e-6

    def loss_at(features_a, features_b) -> float:
        moved = ContrastiveBatch(
            features_a=features_a,
            features_b=features_b,
            pairs=batch.pairs,
            negatives_a=batch.negatives_a,
            negatives_b=batch.negatives_b,
        )
        return hardest_contrastive_loss(moved)[0]

    # Act
    _, grad_a, grad_b = hardest_contrastive_loss(batch)

    # Assert
    for which, grad in ((0, grad_a), (1, grad_b)):
        for flat_index in range(grad.size):
            plus = [batch.features_a.copy(), batch.features_b.copy()]
            minus = [batch.features_a.copy(), batch.features_b.copy()]
            plus[which].flat[flat_index] += epsilon
            minus[which].flat[flat_index] -= epsilon
            numeric = (loss_at(*plus) - loss_at(*minus)) / (2 * epsilon)
            assert numeric == pytest.approx(grad.flat[flat_index], abs=1e-6)


@pytest.mark.parametrize(
    ("pairs", "negatives_a", "negatives_b"),
    [
        pytest.param([[5, 0]], [[1]], [[1]], id="pair-outside-a"),
        pytest.param([[0, 7]], [[1]], [[1]], id="pair-outside-b"),
        pytest.param([[0, 1]], [[1]], [[1]], id="negative-is-the-match"),
        pytest.param([[0, 0]], np.zeros((1, 0)), [[1]], id="no-negatives"),
    ],
)
def test_invalid_batches_are_rejected(pairs, negatives_a, negatives_b):
    with pytest.raises(InvalidParameterError):
        _ = batch_of(
            np.zeros((2, 3)), np.zeros((2, 3)), pairs, negatives_a, negatives_b
        )


def line(n: int, spacing: float = 0.01) -> np.ndarray:
    return np.column_stack([np.arange(n) * spacing, np.zeros(n), np.zeros(n)])


def test_sampled_negatives_lie_beyond_epsilon(rng: np.random.Generator):
    # Arrange
    points_a, points_b = line(20), line(20) + [0.0, 0.001, 0.0]
    correspondences = np.column_stack([np.arange(20), np.arange(20)])
    cfg = ContrastiveConfig(pairs=5, negatives=3)

    # Act
    pairs, negatives_a, negatives_b = sample_contrastive_indices(
        points_a, points_b, correspondences, cfg, epsilon=0.025, rng_seed=rng
    )

    # Assert
    assert pairs.shape == (5, 2)
    assert len(np.unique(pairs[:, 0])) == 5
    assert negatives_a.shape == negatives_b.shape == (5, 3)
    for (i, j), far_b, far_a in zip(pairs, negatives_a, negatives_b, strict=True):
        assert np.all(np.linalg.norm(points_b[far_b] - points_b[j], axis=1) > 0.025)
        assert np.all(np.linalg.norm(points_a[far_a] - points_a[i], axis=1) > 0.025)


def test_few_correspondences_are_drawn_with_replacement():
    # Arrange
    cfg = ContrastiveConfig(pairs=8, negatives=2)

    # Act
    pairs, _, _ = sample_contrastive_indices(
        line(10), line(10), np.array([[0, 0], [9, 9]]), cfg, 0.005, rng_seed=0
    )

    # Assert
    assert len(pairs) == 8
    assert set(map(tuple, pairs.tolist())) <= {(0, 0), (9, 9)}


@pytest.mark.parametrize(
    ("correspondences", "epsilon"),
    [
        pytest.param(np.zeros((0, 2)), 0.005, id="no-correspondences"),
        pytest.param(np.array([[0, 0], [1, 1]]), 1.0, id="nothing-far-enough"),
    ],
)
def test_unusable_correspondences_give_no_pairs(correspondences, epsilon: float):
    # Act
    pairs, negatives_a, negatives_b = sample_contrastive_indices(
        line(4), line(4), correspondences, ContrastiveConfig(negatives=3), epsilon, 0
    )

    # Assert
    assert pairs.shape == (0, 2)
    assert negatives_a.shape == negatives_b.shape == (0, 3)


@pytest.mark.parametrize(
    ("pred", "target", "expected"),
    [
        pytest.param([0.2, 0.4], [0.2, 0.4], 0.0, id="exact"),
        pytest.param([0.1, 0.1], [0.0, 0.0], 0.01, id="constant-offset"),
        pytest.param([1.0, 0.0, 0.0, 0.0], [0.0] * 4, 0.25, id="single-miss"),
    ],
)
def test_mse_values(pred, target, expected: float):
    loss, _ = mse_heatmap_loss(np.array(pred), np.array(target))
    assert loss == pytest.approx(expected)


def test_mse_gradient_matches_finite_differences(rng: np.random.Generator):
    # Arrange
    pred, target = rng.uniform(size=7), rng.uniform(size=7)
    epsilon = 1e-7

    # Act
    _, grad = mse_heatmap_loss(pred, target)

    # Assert
    for index in range(len(pred)):
        step = np.zeros_like(pred)
        step[index] = epsilon
        plus, _ = mse_heatmap_loss(pred + step, target)
        minus, _ = mse_heatmap_loss(pred - step, target)
        assert (plus - minus) / (2 * epsilon) == pytest.approx(grad[index], abs=1e-6)


def test_mse_shape_mismatch_is_rejected():
    with pytest.raises(InvalidParameterError):
        _ = mse_heatmap_loss(np.zeros(3), np.zeros(4))


@pytest.mark.parametrize(
    ("weights", "expected"),
    [
        pytest.param(LossWeights(), 4.0, id="defaults"),
        pytest.param(LossWeights(hc=0.0), 1.0, id="heatmap-only"),
        pytest.param(LossWeights(mse=0.0), 3.0, id="contrastive-only"),
    ],
)
def test_total_loss_weights_the_terms(weights: LossWeights, expected: float):
    assert total_loss(1.0, 1.0, weights) == pytest.approx(expected)
