"""
Per-point grasp-likelihood scorer with hand-written gradients.

The encoder is a single-resolution, multi-radius set aggregation: for every
point and every radius it groups up to ``nsamples`` neighbours (nearest first,
lower index on ties), maps each neighbour's features through a linear layer
and a ReLU, and max-pools over the group. Scales are concatenated and
projected to ``feature_dim``. Short groups are padded with their first member,
which leaves the max unchanged.

Neighbour features are ``(p_j - p_i) / r``, ``p_j``, ``n_j`` and ``c_j`` for a
mean-centred cloud. The head is ``D -> hidden -> 1`` with ReLU and a sigmoid.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from core.config import EncoderConfig
from core.geometry import PointCloud, SpatialIndex
from core.seeding import as_generator

logger = logging.getLogger(__name__)

POINT_FEATURES = 10


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """Grouping indices per scale, each of shape (n, nsamples)."""

    groups: tuple[np.ndarray, ...]


def build_neighborhoods(points: np.ndarray, cfg: EncoderConfig) -> Neighborhoods:
    index = SpatialIndex(points)
    groups = []
    for radius, nsamples in zip(cfg.radii, cfg.nsamples, strict=True):
        idx, _ = index.radius_many(points, radius, nsamples)
        first = idx[:, :1]
        groups.append(np.where(idx < 0, first, idx))
    return Neighborhoods(groups=tuple(groups))


def parameter_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in checkpoint order."""
    shapes: dict[str, tuple[int, ...]] = {}
    for s, width in enumerate(cfg.widths):
        shapes[f"scale{s}.weight"] = (POINT_FEATURES, width)
        shapes[f"scale{s}.bias"] = (width,)
    shapes["project.weight"] = (sum(cfg.widths), cfg.feature_dim)
    shapes["project.bias"] = (cfg.feature_dim,)
    shapes["head.hidden.weight"] = (cfg.feature_dim, cfg.head_hidden)
    shapes["head.hidden.bias"] = (cfg.head_hidden,)
    shapes["head.out.weight"] = (cfg.head_hidden, 1)
    shapes["head.out.bias"] = (1,)
    return shapes


Params = dict[str, np.ndarray]


@dataclass(eq=False)
class ScorerNetwork:
    cfg: EncoderConfig
    params: Params = field(default_factory=dict)

    def __post_init__(self):
        shapes = parameter_shapes(self.cfg)
        if set(self.params) != set(shapes):
            raise ValueError("network parameters do not match the encoder config")
        for name, shape in shapes.items():
            value = np.asarray(self.params[name], dtype=self.dtype)
            if value.shape != shape:
                raise ValueError(f"{name} has shape {value.shape}, expected {shape}")
            self.params[name] = value

    @property
    def dtype(self) -> type:
        return np.float32 if self.cfg.precision == "float32" else np.float64

    def copy(self) -> "ScorerNetwork":
        return ScorerNetwork(
            cfg=self.cfg, params={k: v.copy() for k, v in self.params.items()}
        )

    def flat(self) -> np.ndarray:
        shapes = parameter_shapes(self.cfg)
        return np.concatenate(
            [self.params[name].astype(np.float64).reshape(-1) for name in shapes]
        )

    @classmethod
    def from_flat(cls, cfg: EncoderConfig, values: np.ndarray) -> "ScorerNetwork":
        params: Params = {}
        offset = 0
        for name, shape in parameter_shapes(cfg).items():
            size = int(np.prod(shape))
            params[name] = np.asarray(values[offset : offset + size]).reshape(shape)
            offset += size
        if offset != len(values):
            raise ValueError(f"expected {offset} parameters, got {len(values)}")
        return cls(cfg=cfg, params=params)


def init_network(
    cfg: EncoderConfig, rng_seed: int | np.random.Generator
) -> ScorerNetwork:
    """He-normal weights and zero biases."""
    rng = as_generator(rng_seed)
    params: Params = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
    return ScorerNetwork(cfg=cfg, params=params)


def zero_gradients(net: ScorerNetwork) -> Params:
    return {name: np.zeros_like(value) for name, value in net.params.items()}


@dataclass(eq=False)
class EncoderCache:
    """Winning neighbour inputs and pre-activations of every max-pool."""

    selected_inputs: list[np.ndarray]
    selected_preact: list[np.ndarray]
    pooled: np.ndarray


@dataclass(eq=False)
class HeadCache:
    features: np.ndarray
    hidden_preact: np.ndarray
    hidden: np.ndarray
    scores: np.ndarray


def _point_features(cloud: PointCloud, dtype: type) -> np.ndarray:
    cloud.require("normals", "curvature")
    assert cloud.normals is not None and cloud.curvature is not None
    return np.column_stack(
        [cloud.points, cloud.normals, cloud.curvature[:, None]]
    ).astype(dtype)


def forward_features(
    net: ScorerNetwork, cloud: PointCloud, hoods: Neighborhoods | None = None
) -> tuple[np.ndarray, EncoderCache]:
    """Per-point features (n, D) plus what the backward pass needs."""
    cfg = net.cfg
    if hoods is None:
        hoods = build_neighborhoods(cloud.points, cfg)
    base = _point_features(cloud, net.dtype)
    points = base[:, :3]
    rows = np.arange(len(cloud))[:, None]

    pooled, inputs, preacts = [], [], []
    for s, radius in enumerate(cfg.radii):
        group = hoods.groups[s]
        relative = (points[group] - points[:, None, :]) / radius
        grouped = np.concatenate([relative, base[group]], axis=2)
        preact = grouped @ net.params[f"scale{s}.weight"] + net.params[f"scale{s}.bias"]
        winner = np.argmax(preact, axis=1)
        chosen_preact = np.take_along_axis(preact, winner[:, None, :], axis=1)[:, 0]
        chosen_inputs = grouped[rows, winner]
        pooled.append(np.maximum(chosen_preact, 0.0))
        inputs.append(chosen_inputs)
        preacts.append(chosen_preact)

    concatenated = np.concatenate(pooled, axis=1)
    features = concatenated @ net.params["project.weight"] + net.params["project.bias"]
    return features, EncoderCache(
        selected_inputs=inputs, selected_preact=preacts, pooled=concatenated
    )


def backward_features(
    net: ScorerNetwork, cache: EncoderCache, grad_features: np.ndarray, grads: Params
) -> None:
    """Accumulate encoder parameter gradients for ``d loss / d features``."""
    grads["project.weight"] += cache.pooled.T @ grad_features
    grads["project.bias"] += grad_features.sum(axis=0)
    grad_pooled = grad_features @ net.params["project.weight"].T

    offset = 0
    for s, width in enumerate(net.cfg.widths):
        grad_scale = grad_pooled[:, offset : offset + width]
        offset += width
        grad_preact = grad_scale * (cache.selected_preact[s] > 0.0)
        # selected_inputs[s][i, c] is the neighbour that won channel c.
        grads[f"scale{s}.weight"] += np.einsum(
            "ncf,nc->fc", cache.selected_inputs[s], grad_preact
        )
        grads[f"scale{s}.bias"] += grad_preact.sum(axis=0)


def forward_head(net: ScorerNetwork, features: np.ndarray) -> HeadCache:
    hidden_preact = (
        features @ net.params["head.hidden.weight"] + net.params["head.hidden.bias"]
    )
    hidden = np.maximum(hidden_preact, 0.0)
    logits = hidden @ net.params["head.out.weight"] + net.params["head.out.bias"]
    scores = expit(logits[:, 0])
    return HeadCache(
        features=features, hidden_preact=hidden_preact, hidden=hidden, scores=scores
    )


def backward_head(
    net: ScorerNetwork, cache: HeadCache, grad_scores: np.ndarray, grads: Params
) -> np.ndarray:
    """Accumulate head gradients; return ``d loss / d features``."""
    grad_logits = (grad_scores * cache.scores * (1.0 - cache.scores))[:, None]
    grads["head.out.weight"] += cache.hidden.T @ grad_logits
    grads["head.out.bias"] += grad_logits.sum(axis=0)
    grad_hidden = (grad_logits @ net.params["head.out.weight"].T) * (
        cache.hidden_preact > 0.0
    )
    grads["head.hidden.weight"] += cache.features.T @ grad_hidden
    grads["head.hidden.bias"] += grad_hidden.sum(axis=0)
    return grad_hidden @ net.params["head.hidden.weight"].T


def encode(
    cloud: PointCloud, net: ScorerNetwork, hoods: Neighborhoods | None = None
) -> np.ndarray:
    features, _ = forward_features(net, cloud, hoods)
    return features


def predict_scores(
    cloud: PointCloud, net: ScorerNetwork, hoods: Neighborhoods | None = None
) -> np.ndarray:
    """Per-point grasp likelihood in (0, 1)."""
    return forward_head(net, encode(cloud, net, hoods)).scores.astype(np.float64)
