"""
Training command: assemble samples from a manifest, pretrain, finetune.

Only records of the ``train`` split are used. Ablations:
``no_pretrain`` skips the Siamese stage; ``sparse_labels`` regresses onto
binary contact targets instead of dense heatmaps and also skips pretraining.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

from core.checkpoint import save_checkpoint, write_loss_csv
from core.config import ToolkitConfig
from core.errors import DatasetError
from core.heatmap import sparse_targets
from core.network import init_network
from core.seeding import derive_seed
from core.training import (
    EpochLoss,
    TrainingSample,
    TrainingView,
    pretrain_siamese,
    prepare_view,
    train_scorer,
)
from pipeline.manifest import RecordFiles, load_manifest, manifest_path

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "scorer.ckpt"
PRETRAIN_CHECKPOINT_NAME = "pretrained.ckpt"
PRETRAIN_LOSS_NAME = "loss_pretrain.csv"
TRAIN_LOSS_NAME = "loss_train.csv"


@dataclass(frozen=True)
class TrainOutcome:
    checkpoint: Path
    history: list[EpochLoss]
    samples: int


def build_samples(
    location: Path, config: ToolkitConfig, sparse_labels: bool = False
) -> list[TrainingSample]:
    """
    One sample per usable train record, paired with its first partner view.

    Records need a heatmap unless ``sparse_labels`` is set.
    """
    path = manifest_path(location)
    base = path.parent
    manifest = load_manifest(path)
    records = manifest.ok_records("train")
    by_id = {record.id: record for record in records}
    views: dict[str, TrainingView] = {}

    def view_of(record_id: str) -> TrainingView:
        if record_id not in views:
            files = RecordFiles(base, by_id[record_id])
            cloud = files.cloud()
            if sparse_labels:
                target = sparse_targets(cloud, files.grasps()).values
            else:
                target = files.heatmap().values
            views[record_id] = prepare_view(
                cloud, config.encoder, files.camera(), target
            )
        return views[record_id]

    samples = []
    for record in records:
        if not sparse_labels and record.heatmap_path is None:
            raise DatasetError(f"record {record.id!r} has no heatmap; run densify")
        partner = None
        pairs = None
        for partner_id, correspondence in RecordFiles(base, record).correspondences():
            if partner_id in by_id and len(correspondence):
                partner, pairs = view_of(partner_id), correspondence.pairs
                break
        if partner is None or pairs is None:
            samples.append(TrainingSample(view=view_of(record.id)))
        else:
            samples.append(
                TrainingSample(view=view_of(record.id), partner=partner, pairs=pairs)
            )
    if not samples:
        raise DatasetError("manifest has no usable train records")
    return samples


def train_from_manifest(
    location: Path,
    out_dir: Path,
    config: ToolkitConfig | None = None,
    no_pretrain: bool = False,
    sparse_labels: bool = False,
) -> TrainOutcome:
    manifest = load_manifest(location)
    config = config or manifest.config
    sparse = sparse_labels or config.train.sparse_labels
    pretrain = config.train.pretrain and not no_pretrain and not sparse
    seed = config.train.seed
    epsilon = config.render.correspondence_epsilon

    samples = build_samples(location, config, sparse)
    if pretrain and not any(sample.has_pairs for sample in samples):
        logger.warning("no view pair has correspondences; skipping pretraining")
        pretrain = False
    logger.info(
        "training on %d sample(s), pretrain=%s sparse_labels=%s",
        len(samples),
        pretrain,
        sparse,
    )
    net = init_network(config.encoder, derive_seed(seed, 0))
    history: list[EpochLoss] = []
    steps = 0

    if pretrain:
        result = pretrain_siamese(
            samples,
            net,
            config.optimizer,
            config.contrastive,
            epsilon,
            derive_seed(seed, 1),
            epochs=config.train.pretrain_epochs,
        )
        net = result.net
        history += result.history
        steps = result.history[-1].steps if result.history else 0
        save_checkpoint(out_dir / PRETRAIN_CHECKPOINT_NAME, net, steps, seed)
        write_loss_csv(out_dir / PRETRAIN_LOSS_NAME, result.history)

    result = train_scorer(
        samples,
        net,
        config.optimizer,
        config.loss_weights,
        config.contrastive,
        epsilon,
        derive_seed(seed, 2),
    )
    history += result.history
    steps += result.history[-1].steps if result.history else 0
    checkpoint = out_dir / CHECKPOINT_NAME
    save_checkpoint(checkpoint, result.net, steps, seed)
    write_loss_csv(out_dir / TRAIN_LOSS_NAME, result.history)
    logger.info("wrote %s after %d step(s)", checkpoint, steps)
    return TrainOutcome(checkpoint=checkpoint, history=history, samples=len(samples))
