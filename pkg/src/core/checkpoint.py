"""
Scorer checkpoints and loss curves.

A checkpoint is a little-endian u32 header length, a UTF-8 JSON header (encoder
config, step, seed, parameter layout) and the parameters as a float64 blob in
layout order. Headers are written with sorted keys, so equal inputs give
byte-identical files.
"""

import csv
import json
import struct
from collections.abc import Sequence
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from core.config import EncoderConfig
from core.errors import CheckpointMismatchError, DatasetError
from core.network import ScorerNetwork, parameter_shapes
from core.training import EpochLoss

_LENGTH = struct.Struct("<I")


class CheckpointHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: str = "aograsp-scorer"
    version: int = 1
    encoder: EncoderConfig
    step: int
    seed: int
    layout: list[tuple[str, list[int]]]


def encode_checkpoint(net: ScorerNetwork, step: int, seed: int) -> bytes:
    header = CheckpointHeader(
        encoder=net.cfg,
        step=step,
        seed=seed,
        layout=[
            (name, list(shape)) for name, shape in parameter_shapes(net.cfg).items()
        ],
    )
    text = json.dumps(header.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    blob = net.flat().astype("<f8").tobytes()
    return _LENGTH.pack(len(text)) + text + blob


def decode_checkpoint(
    data: bytes, expected: EncoderConfig | None = None
) -> tuple[ScorerNetwork, CheckpointHeader]:
    """
    Rebuild a network from checkpoint bytes.

    Raises:
        CheckpointMismatchError: ``expected`` differs from the stored encoder.
        DatasetError: the file is truncated or malformed.
    """
    if len(data) < _LENGTH.size:
        raise DatasetError("truncated checkpoint header")
    (length,) = _LENGTH.unpack_from(data, 0)
    end = _LENGTH.size + length
    try:
        header = CheckpointHeader.model_validate_json(data[_LENGTH.size : end])
    except ValidationError as exc:
        raise DatasetError(f"malformed checkpoint header: {exc}") from exc

    if expected is not None and expected != header.encoder:
        raise CheckpointMismatchError(
            header.encoder.model_dump_json(), expected.model_dump_json()
        )
    layout = [(name, tuple(shape)) for name, shape in header.layout]
    if layout != list(parameter_shapes(header.encoder).items()):
        raise DatasetError("checkpoint parameter layout does not match its encoder")

    count = sum(int(np.prod(shape)) for _, shape in layout)
    if len(data) != end + 8 * count:
        raise DatasetError(
            f"checkpoint holds {(len(data) - end) // 8} values, expected {count}"
        )
    values = np.frombuffer(data, dtype="<f8", count=count, offset=end)
    return ScorerNetwork.from_flat(header.encoder, values.copy()), header


def save_checkpoint(path: Path, net: ScorerNetwork, step: int, seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_bytes(encode_checkpoint(net, step, seed))


def load_checkpoint(
    path: Path, expected: EncoderConfig | None = None
) -> tuple[ScorerNetwork, CheckpointHeader]:
    return decode_checkpoint(path.read_bytes(), expected)


def write_loss_csv(path: Path, history: Sequence[EpochLoss]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f.name for f in fields(EpochLoss)]
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in history:
            writer.writerow(asdict(row))
