"""
Two-stage scorer training: Siamese contrastive pretraining, then the combined
heatmap and contrastive objective.

Items in a batch are processed in order and their gradients summed in that
order, so a fixed seed reproduces the loss history exactly in 64-bit mode.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from core.config import (
    ContrastiveConfig,
    EncoderConfig,
    LossWeights,
    OptimizerConfig,
)
from core.errors import DatasetError, InvalidParameterError, TrainingDivergedError
from core.geometry import PointCloud, center_at_mean
from core.losses import (
    ContrastiveBatch,
    hardest_contrastive_loss,
    mse_heatmap_loss,
    sample_contrastive_indices,
    total_loss,
)
from core.network import (
    Neighborhoods,
    Params,
    ScorerNetwork,
    backward_features,
    backward_head,
    build_neighborhoods,
    forward_features,
    forward_head,
    parameter_shapes,
    zero_gradients,
)
from core.optim import Adam
from core.render import Camera, to_camera_frame
from core.seeding import as_generator

logger = logging.getLogger(__name__)

HC_TERM = "hardest_contrastive"
MSE_TERM = "mse"


@dataclass(frozen=True, eq=False)
class TrainingView:
    """
    One rendered cloud prepared as network input.

    ``cloud`` is in the encoder's frame and centred at its mean;
    ``world_points`` keeps the world positions used to pick negatives.
    """

    cloud: PointCloud
    hoods: Neighborhoods
    world_points: np.ndarray
    target: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """A view, optionally with a partner view and their correspondences."""

    view: TrainingView
    partner: TrainingView | None = None
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.intp))

    @property
    def has_pairs(self) -> bool:
        return self.partner is not None and len(self.pairs) > 0


@dataclass(frozen=True)
class EpochLoss:
    stage: str
    epoch: int
    steps: int
    hc: float
    mse: float
    total: float
    learning_rate: float


@dataclass(eq=False)
class TrainingResult:
    net: ScorerNetwork
    history: list[EpochLoss]


def network_input(
    cloud: PointCloud, cfg: EncoderConfig, camera: Camera | None = None
) -> PointCloud:
    """Express a world-frame cloud in the encoder's frame and centre it."""
    if cfg.frame == "camera" and cloud.frame != "camera":
        if camera is None:
            raise InvalidParameterError("camera-frame encoding needs the camera")
        cloud = to_camera_frame(cloud, camera)
    centred, _ = center_at_mean(cloud)
    return centred


def prepare_view(
    cloud: PointCloud,
    cfg: EncoderConfig,
    camera: Camera | None = None,
    target: np.ndarray | None = None,
) -> TrainingView:
    net_cloud = network_input(cloud, cfg, camera)
    if target is not None and len(target) != len(cloud):
        raise InvalidParameterError(
            f"target has {len(target)} values for {len(cloud)} points"
        )
    return TrainingView(
        cloud=net_cloud,
        hoods=build_neighborhoods(net_cloud.points, cfg),
        world_points=cloud.points,
        target=None if target is None else np.asarray(target, dtype=np.float64),
    )


def encoder_parameter_names(cfg: EncoderConfig) -> list[str]:
    return [name for name in parameter_shapes(cfg) if not name.startswith("head.")]


def _check_finite(value: float, step: int, term: str) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(step, term)


def _contrastive_step(
    net: ScorerNetwork,
    sample: TrainingSample,
    features_a: np.ndarray,
    cfg: ContrastiveConfig,
    epsilon: float,
    rng: np.random.Generator,
    scale: float,
    grads: Params,
) -> tuple[float, np.ndarray]:
    """HC loss of one sample; returns it and ``scale * dL/d features_a``."""
    assert sample.partner is not None
    partner = sample.partner
    features_b, cache_b = forward_features(net, partner.cloud, partner.hoods)
    pairs, negatives_a, negatives_b = sample_contrastive_indices(
        sample.view.world_points, partner.world_points, sample.pairs, cfg, epsilon, rng
    )
    batch = ContrastiveBatch(
        features_a=features_a,
        features_b=features_b,
        pairs=pairs,
        negatives_a=negatives_a,
        negatives_b=negatives_b,
        margin_pos=cfg.margin_pos,
        margin_neg=cfg.margin_neg,
    )
    loss, grad_a, grad_b = hardest_contrastive_loss(batch)
    backward_features(net, cache_b, scale * grad_b, grads)
    return loss, scale * grad_a


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    return [order[i : i + size] for i in range(0, len(order), size)]


def _epoch_count(epochs: int | None, opt: OptimizerConfig) -> int:
    if epochs is None:
        return opt.epochs
    if epochs < 0:
        raise InvalidParameterError(f"epochs must be non-negative, got {epochs}")
    return epochs


def pretrain_siamese(
    samples: Sequence[TrainingSample],
    net: ScorerNetwork,
    opt: OptimizerConfig,
    contrastive: ContrastiveConfig,
    epsilon: float,
    rng_seed: int | np.random.Generator,
    epochs: int | None = None,
) -> TrainingResult:
    """
    Minimise the hardest contrastive loss alone over view pairs.

    Only encoder parameters are updated; the head is returned unchanged.
    """
    usable = [sample for sample in samples if sample.has_pairs]
    if not usable:
        raise DatasetError("no view pair has usable correspondences")
    net = net.copy()
    rng = as_generator(rng_seed)
    names = encoder_parameter_names(net.cfg)
    encoder_params = {name: net.params[name] for name in names}
    optimizer = Adam(encoder_params, opt)
    n_epochs = _epoch_count(epochs, opt)
    history: list[EpochLoss] = []
    for epoch in tqdm(range(n_epochs), desc="pretrain", disable=None):
        losses = []
        for batch in _batches(rng.permutation(len(usable)), opt.batch_size):
            grads = zero_gradients(net)
            batch_loss = 0.0
            for index in batch:
                sample = usable[index]
                view = sample.view
                features, cache = forward_features(net, view.cloud, view.hoods)
                loss, grad_features = _contrastive_step(
                    net,
                    sample,
                    features,
                    contrastive,
                    epsilon,
                    rng,
                    scale=1.0 / len(batch),
                    grads=grads,
                )
                _check_finite(loss, optimizer.step_count, HC_TERM)
                backward_features(net, cache, grad_features, grads)
                batch_loss += loss / len(batch)
            optimizer.step(encoder_params, grads)
            losses.append(batch_loss)
        mean = float(np.mean(losses))
        history.append(
            EpochLoss(
                stage="pretrain",
                epoch=epoch,
                steps=optimizer.step_count,
                hc=mean,
                mse=0.0,
                total=mean,
                learning_rate=optimizer.learning_rate,
            )
        )
        logger.debug("pretrain epoch=%d hc=%.6f", epoch, mean)
    return TrainingResult(net=net, history=history)


def train_scorer(
    samples: Sequence[TrainingSample],
    net: ScorerNetwork,
    opt: OptimizerConfig,
    weights: LossWeights,
    contrastive: ContrastiveConfig,
    epsilon: float,
    rng_seed: int | np.random.Generator,
    epochs: int | None = None,
) -> TrainingResult:
    """
    Minimise ``hc * L_HC + mse * L_MSE``.

    Samples without a partner view contribute only the heatmap term. With a zero
    contrastive weight no partner is ever encoded.
    """
    if not samples:
        raise DatasetError("no training samples")
    for sample in samples:
        if sample.view.target is None:
            raise DatasetError("every training view needs a heatmap target")
    net = net.copy()
    rng = as_generator(rng_seed)
    optimizer = Adam(net.params, opt)
    n_epochs = _epoch_count(epochs, opt)
    history: list[EpochLoss] = []
    for epoch in tqdm(range(n_epochs), desc="train", disable=None):
        hc_losses, mse_losses = [], []
        for batch in _batches(rng.permutation(len(samples)), opt.batch_size):
            grads = zero_gradients(net)
            batch_hc = batch_mse = 0.0
            scale = 1.0 / len(batch)
            for index in batch:
                sample = samples[index]
                view = sample.view
                assert view.target is not None
                features, cache = forward_features(net, view.cloud, view.hoods)
                head = forward_head(net, features)
                mse, grad_scores = mse_heatmap_loss(head.scores, view.target)
                _check_finite(mse, optimizer.step_count, MSE_TERM)
                grad_features = backward_head(
                    net, head, weights.mse * scale * grad_scores, grads
                )
                if weights.hc > 0 and sample.has_pairs:
                    hc, grad_hc = _contrastive_step(
                        net,
                        sample,
                        features,
                        contrastive,
                        epsilon,
                        rng,
                        scale=weights.hc * scale,
                        grads=grads,
                    )
                    _check_finite(hc, optimizer.step_count, HC_TERM)
                    grad_features = grad_features + grad_hc
                    batch_hc += hc * scale
                backward_features(net, cache, grad_features, grads)
                batch_mse += mse * scale
            optimizer.step(net.params, grads)
            hc_losses.append(batch_hc)
            mse_losses.append(batch_mse)
        hc_mean = float(np.mean(hc_losses))
        mse_mean = float(np.mean(mse_losses))
        history.append(
            EpochLoss(
                stage="finetune",
                epoch=epoch,
                steps=optimizer.step_count,
                hc=hc_mean,
                mse=mse_mean,
                total=total_loss(hc_mean, mse_mean, weights),
                learning_rate=optimizer.learning_rate,
            )
        )
        logger.debug("finetune epoch=%d hc=%.6f mse=%.6f", epoch, hc_mean, mse_mean)
    return TrainingResult(net=net, history=history)
