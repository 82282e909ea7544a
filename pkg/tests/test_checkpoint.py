import csv
from pathlib import Path

import numpy as np
import pytest

from core.checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
    write_loss_csv,
)
from core.config import EncoderConfig
from core.errors import CheckpointMismatchError, DatasetError
from core.network import init_network
from core.training import EpochLoss


def test_checkpoint_restores_parameters(tmp_path: Path, small_encoder: EncoderConfig):
    # Arrange
    net = init_network(small_encoder, rng_seed=11)
    path = tmp_path / "model" / "scorer.ckpt"

    # Act
    save_checkpoint(path, net, step=120, seed=11)
    loaded, header = load_checkpoint(path, expected=small_encoder)

    # Assert
    np.testing.assert_array_equal(loaded.flat(), net.flat())
    assert header.step == 120
    assert header.seed == 11
    assert header.encoder == small_encoder
    assert header.layout[0] == ("scale0.weight", [10, 3])


def test_equal_networks_give_identical_bytes(small_encoder: EncoderConfig):
    net = init_network(small_encoder, rng_seed=3)
    assert encode_checkpoint(net, 1, 3) == encode_checkpoint(net.copy(), 1, 3)


def test_mismatched_encoder_is_rejected(small_encoder: EncoderConfig):
    # Arrange
    data = encode_checkpoint(init_network(small_encoder, rng_seed=0), 0, 0)
    other = small_encoder.model_copy(update={"feature_dim": 5})

    # Act / Assert
    with pytest.raises(CheckpointMismatchError):
        _ = decode_checkpoint(data, expected=other)


@pytest.mark.parametrize(
    "cut",
    [
        pytest.param(lambda data: data[:2], id="no-length"),
        pytest.param(lambda data: data[:20], id="cut-header"),
        pytest.param(lambda data: data[:-8], id="missing-value"),
        pytest.param(lambda data: data + b"\0" * 8, id="extra-value"),
    ],
)
def test_damaged_checkpoints_are_rejected(small_encoder: EncoderConfig, cut):
    data = encode_checkpoint(init_network(small_encoder, rng_seed=0), 0, 0)
    with pytest.raises(DatasetError):
        _ = decode_checkpoint(cut(data))


def test_loss_curve_has_one_row_per_epoch(tmp_path: Path):
    # Arrange
    history = [
        EpochLoss("pretrain", 0, 4, 0.5, 0.0, 0.5, 1e-4),
        EpochLoss("finetune", 0, 8, 0.25, 0.1, 0.85, 1e-4),
    ]

    # Act
    write_loss_csv(tmp_path / "loss.csv", history)

    # Assert
    with (tmp_path / "loss.csv").open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert [row["stage"] for row in rows] == ["pretrain", "finetune"]
    assert float(rows[1]["total"]) == pytest.approx(0.85)
    assert list(rows[0]) == [
        "stage",
        "epoch",
        "steps",
        "hc",
        "mse",
        "total",
        "learning_rate",
    ]
