"""Training objectives and their analytic gradients."""

from dataclasses import dataclass

import numpy as np

from core.config import ContrastiveConfig, LossWeights
from core.errors import InvalidParameterError
from core.geometry import point_distances
from core.seeding import as_generator


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    """
    Features of two views and the sampled pairs.

    Attributes:
        features_a: (n_a, D) features of view A.
        features_b: (n_b, D) features of view B.
        pairs: (|Z|, 2) rows of (index in A, index in B).
        negatives_a: (|Z|, |N|) indices into B, the candidates for anchor i.
        negatives_b: (|Z|, |N|) indices into A, the candidates for anchor j.
    """

    features_a: np.ndarray
    features_b: np.ndarray
    pairs: np.ndarray
    negatives_a: np.ndarray
    negatives_b: np.ndarray
    margin_pos: float = 0.1
    margin_neg: float = 1.4

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.intp).reshape(-1, 2)
        object.__setattr__(self, "pairs", pairs)
        for name in ("negatives_a", "negatives_b"):
            value = np.asarray(getattr(self, name), dtype=np.intp)
            if value.ndim != 2:
                value = value.reshape(len(pairs), -1 if len(pairs) else 0)
            object.__setattr__(self, name, value)
        if len(pairs) == 0:
            return
        if pairs[:, 0].max() >= len(self.features_a) or pairs.min() < 0:
            raise InvalidParameterError("pair index outside view A")
        if pairs[:, 1].max() >= len(self.features_b):
            raise InvalidParameterError("pair index outside view B")
        if self.negatives_a.shape[1] == 0 or self.negatives_b.shape[1] == 0:
            raise InvalidParameterError("every anchor needs at least one negative")
        if np.any(self.negatives_a == pairs[:, 1:2]) or np.any(
            self.negatives_b == pairs[:, 0:1]
        ):
            raise InvalidParameterError("negatives must exclude the anchor's match")

    def swapped(self) -> "ContrastiveBatch":
        return ContrastiveBatch(
            features_a=self.features_b,
            features_b=self.features_a,
            pairs=self.pairs[:, ::-1],
            negatives_a=self.negatives_b,
            negatives_b=self.negatives_a,
            margin_pos=self.margin_pos,
            margin_neg=self.margin_neg,
        )


def _hardest_negative_term(
    anchors: np.ndarray,
    candidates: np.ndarray,
    negatives: np.ndarray,
    margin: float,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss, anchor gradients, winning negative index and its gradients."""
    differences = anchors[:, None, :] - candidates[negatives]
    distances = np.linalg.norm(differences, axis=2)
    hardest = np.argmin(distances, axis=1)
    rows = np.arange(len(anchors))
    nearest = distances[rows, hardest]
    hinge = np.maximum(margin - nearest, 0.0)
    count = negatives.shape[1]
    loss = float(np.sum(hinge**2) / (2 * count))

    direction = differences[rows, hardest]
    scale = np.divide(
        -hinge / count, nearest, out=np.zeros_like(nearest), where=nearest > 0
    )
    grad_anchor = scale[:, None] * direction
    return loss, grad_anchor, negatives[rows, hardest], -grad_anchor


def hardest_contrastive_loss(
    batch: ContrastiveBatch,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Hardest contrastive loss over the sampled pairs.

    Matched features are pulled within ``margin_pos``; each anchor's hardest
    negative is pushed beyond ``margin_neg``. The hinge subgradient at its kink
    is 0 and the hardest negative is the first minimum in each row.

    Returns:
        The loss and its gradients with respect to ``features_a`` and
        ``features_b``.
    """
    grad_a = np.zeros_like(batch.features_a)
    grad_b = np.zeros_like(batch.features_b)
    if len(batch.pairs) == 0:
        return 0.0, grad_a, grad_b

    i, j = batch.pairs[:, 0], batch.pairs[:, 1]
    f_i, f_j = batch.features_a[i], batch.features_b[j]
    difference = f_i - f_j
    distance = np.linalg.norm(difference, axis=1)
    hinge = np.maximum(distance - batch.margin_pos, 0.0)
    pair_count = len(batch.pairs)
    loss = float(np.sum(hinge**2) / pair_count)
    scale = np.divide(
        2.0 * hinge / pair_count,
        distance,
        out=np.zeros_like(distance),
        where=distance > 0,
    )
    np.add.at(grad_a, i, scale[:, None] * difference)
    np.add.at(grad_b, j, -scale[:, None] * difference)

    term_a, anchor_a, hard_b, grad_hard_b = _hardest_negative_term(
        f_i, batch.features_b, batch.negatives_a, batch.margin_neg
    )
    np.add.at(grad_a, i, anchor_a)
    np.add.at(grad_b, hard_b, grad_hard_b)

    term_b, anchor_b, hard_a, grad_hard_a = _hardest_negative_term(
        f_j, batch.features_a, batch.negatives_b, batch.margin_neg
    )
    np.add.at(grad_b, j, anchor_b)
    np.add.at(grad_a, hard_a, grad_hard_a)

    return loss + term_a + term_b, grad_a, grad_b


def sample_contrastive_indices(
    points_a: np.ndarray,
    points_b: np.ndarray,
    correspondences: np.ndarray,
    cfg: ContrastiveConfig,
    epsilon: float,
    rng_seed: int | np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Draw ``cfg.pairs`` matches and ``cfg.negatives`` negatives per anchor.

    Pairs are drawn uniformly, with replacement only when there are too few.
    Negatives of an anchor are uniform over the other view's points farther
    than ``epsilon`` from the anchor's match. Pairs without any valid negative
    are dropped.
    """
    rng = as_generator(rng_seed)
    correspondences = np.asarray(correspondences, dtype=np.intp).reshape(-1, 2)
    if len(correspondences) == 0:
        empty = np.zeros((0, cfg.negatives), dtype=np.intp)
        return np.zeros((0, 2), dtype=np.intp), empty, empty
    chosen = rng.choice(
        len(correspondences),
        size=cfg.pairs,
        replace=len(correspondences) < cfg.pairs,
    )
    pairs, negatives_a, negatives_b = [], [], []
    for i, j in correspondences[np.sort(chosen)]:
        far_b = np.flatnonzero(point_distances(points_b, points_b[j]) > epsilon)
        far_a = np.flatnonzero(point_distances(points_a, points_a[i]) > epsilon)
        if len(far_a) == 0 or len(far_b) == 0:
            continue
        pairs.append((i, j))
        negatives_a.append(
            rng.choice(far_b, size=cfg.negatives, replace=len(far_b) < cfg.negatives)
        )
        negatives_b.append(
            rng.choice(far_a, size=cfg.negatives, replace=len(far_a) < cfg.negatives)
        )
    if not pairs:
        empty = np.zeros((0, cfg.negatives), dtype=np.intp)
        return np.zeros((0, 2), dtype=np.intp), empty, empty
    return np.asarray(pairs), np.asarray(negatives_a), np.asarray(negatives_b)


def mse_heatmap_loss(
    pred: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise InvalidParameterError(
            f"prediction has {pred.shape} entries, target {target.shape}"
        )
    if pred.size == 0:
        return 0.0, np.zeros_like(pred)
    residual = pred - target
    return float(np.mean(residual**2)), 2.0 * residual / pred.size


def total_loss(hc: float, mse: float, w: LossWeights) -> float:
    return w.hc * hc + w.mse * mse
