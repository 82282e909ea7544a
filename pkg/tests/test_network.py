import numpy as np
import pytest

from core.config import EncoderConfig
from core.geometry import PointCloud, center_at_mean
from core.network import (
    POINT_FEATURES,
    Neighborhoods,
    ScorerNetwork,
    backward_features,
    backward_head,
    build_neighborhoods,
    encode,
    forward_features,
    forward_head,
    init_network,
    parameter_shapes,
    predict_scores,
    zero_gradients,
)


def weighted_score_sum(
    net: ScorerNetwork, cloud: PointCloud, hoods: Neighborhoods, weights: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    features, cache = forward_features(net, cloud, hoods)
    head = forward_head(net, features)
    grads = zero_gradients(net)
    grad_features = backward_head(net, head, weights, grads)
    backward_features(net, cache, grad_features, grads)
    return float(weights @ head.scores), grads


def test_parameter_layout_follows_the_config(small_encoder: EncoderConfig):
    # Act
    shapes = parameter_shapes(small_encoder)

    # Assert
    assert list(shapes) == [
        "scale0.weight",
        "scale0.bias",
        "scale1.weight",
        "scale1.bias",
        "project.weight",
        "project.bias",
        "head.hidden.weight",
        "head.hidden.bias",
        "head.out.weight",
        "head.out.bias",
    ]
    assert shapes["scale0.weight"] == (POINT_FEATURES, 3)
    assert shapes["project.weight"] == (6, 4)
    assert shapes["head.out.weight"] == (3, 1)


def test_init_zeroes_biases(small_encoder: EncoderConfig):
    # Act
    net = init_network(small_encoder, rng_seed=0)

    # Assert
    for name, value in net.params.items():
        assert np.all(np.isfinite(value))
        if name.endswith(".bias"):
            assert not value.any()


def test_flat_parameters_rebuild_the_network(small_encoder: EncoderConfig):
    # Arrange
    net = init_network(small_encoder, rng_seed=1)

    # Act
    rebuilt = ScorerNetwork.from_flat(small_encoder, net.flat())

    # Assert
    for name, value in net.params.items():
        np.testing.assert_array_equal(rebuilt.params[name], value)
    with pytest.raises(ValueError):
        _ = ScorerNetwork.from_flat(small_encoder, np.append(net.flat(), 0.0))


def test_missing_parameters_are_rejected(small_encoder: EncoderConfig):
    params = init_network(small_encoder, rng_seed=0).params
    del params["head.out.bias"]
    with pytest.raises(ValueError):
        _ = ScorerNetwork(cfg=small_encoder, params=params)


def test_short_groups_are_padded_with_the_point_itself(small_encoder: EncoderConfig):
    # Arrange
    points = np.array([[0.0, 0, 0], [0.03, 0, 0], [1.0, 0, 0]])

    # Act
    hoods = build_neighborhoods(points, small_encoder)

    # Assert
    assert hoods.groups[0].shape == (3, 4)
    assert hoods.groups[0][2].tolist() == [2, 2, 2, 2]
    assert hoods.groups[0][0].tolist() == [0, 1, 0, 0]


def test_scores_lie_strictly_between_zero_and_one(
    small_encoder: EncoderConfig, blob: PointCloud
):
    # Act
    scores = predict_scores(blob, init_network(small_encoder, rng_seed=2))

    # Assert
    assert scores.shape == (len(blob),)
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_zero_weights_give_the_bias_everywhere(
    small_encoder: EncoderConfig, blob: PointCloud
):
    # Arrange
    net = init_network(small_encoder, rng_seed=0)
    for value in net.params.values():
        value[...] = 0.0
    net.params["project.bias"][...] = [0.5, -1.0, 2.0, 0.0]

    # Act
    features = encode(blob, net)

    # Assert
    np.testing.assert_array_equal(
        features, np.tile([0.5, -1.0, 2.0, 0.0], (len(blob), 1))
    )


def test_features_do_not_depend_on_point_order(
    small_encoder: EncoderConfig, blob: PointCloud, rng: np.random.Generator
):
    # Arrange
    net = init_network(small_encoder, rng_seed=3)
    permutation = rng.permutation(len(blob))

    # Act
    features = encode(blob, net)
    shuffled = encode(blob.subset(permutation), net)

    # Assert
    np.testing.assert_allclose(shuffled, features[permutation], atol=1e-9)


def test_recentred_translation_leaves_features_unchanged(
    small_encoder: EncoderConfig, blob: PointCloud
):
    # Arrange
    net = init_network(small_encoder, rng_seed=4)
    moved = blob.with_attributes(points=blob.points + np.array([3.0, -2.0, 0.5]))

    # Act
    original = encode(center_at_mean(blob)[0], net)
    translated = encode(center_at_mean(moved)[0], net)

    # Assert
    np.testing.assert_allclose(translated, original, atol=1e-9)


def test_analytic_gradients_match_finite_differences(
    small_encoder: EncoderConfig, blob: PointCloud, rng: np.random.Generator
):
    # Arrange
    net = init_network(small_encoder, rng_seed=5)
    for name in net.params:
        if name.endswith(".bias"):
            net.params[name][...] = rng.normal(0.0, 0.1, size=net.params[name].shape)
    cloud, _ = center_at_mean(blob)
    hoods = build_neighborhoods(cloud.points, small_encoder)
    weights = rng.normal(size=len(cloud))
    epsilon = 1e-6

    # Act
    _, grads = weighted_score_sum(net, cloud, hoods, weights)

    # Assert
    for name, value in net.params.items():
        picks = rng.choice(value.size, size=min(3, value.size), replace=False)
        for flat_index in picks:
            original = value.flat[flat_index]
            value.flat[flat_index] = original + epsilon
            plus, _ = weighted_score_sum(net, cloud, hoods, weights)
            value.flat[flat_index] = original - epsilon
            minus, _ = weighted_score_sum(net, cloud, hoods, weights)
            value.flat[flat_index] = original
            numeric = (plus - minus) / (2 * epsilon)
            analytic = grads[name].flat[flat_index]
            scale = max(abs(numeric), abs(analytic), 1e-6)
            assert abs(numeric - analytic) / scale < 1e-3, name


def test_float32_networks_keep_their_precision(blob: PointCloud):
    # Arrange
    cfg = EncoderConfig(
        radii=(0.05,),
        nsamples=(4,),
        widths=(3,),
        feature_dim=2,
        head_hidden=2,
        precision="float32",
    )

    # Act
    net = init_network(cfg, rng_seed=0)
    scores = predict_scores(blob, net)

    # Assert
    assert all(value.dtype == np.float32 for value in net.params.values())
    assert scores.dtype == np.float64
