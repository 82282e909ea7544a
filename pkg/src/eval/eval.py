import asyncio
import csv
import io
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from functools import partial
from pathlib import Path
from typing import Protocol

import numpy as np
from tqdm.asyncio import tqdm_asyncio

from core.config import ToolkitConfig
from core.dependencies import worker_count
from core.errors import AOGraspError, DatasetError
from core.episode import run_episode
from core.geometry import PointCloud
from core.network import ScorerNetwork, predict_scores
from core.paths import root
from core.propose import propose_grasps
from core.seeding import derive_seed
from core.training import network_input
from eval.metrics.models import CloudResult, EvalReport
from eval.metrics.success_rate import calculate_stats
from pipeline.densify import densify_record
from pipeline.manifest import ManifestRecord, RecordFiles, load_manifest, manifest_path

logger = logging.getLogger(__name__)

REPORT_JSON_NAME = "evaluation_results.json"
REPORT_CSV_NAME = "per_cloud.csv"


class ScoreFunction(Protocol):
    """
    Protocol for functions that score every point of a rendered cloud.

    Implementations receive the record's files (for access to its camera,
    labels or heatmap) and the loaded cloud, and return one score in [0, 1]
    per point. They must be picklable: evaluation runs them in worker
    processes.

    Example:
        >>> @dataclass(frozen=True)
        ... class ConstantScorer:
        ...     name: str = "constant"
        ...     def __call__(self, *, files, cloud):
        ...         return np.full(len(cloud), 0.5)
    """

    name: str

    # this is just the protocol
    def __call__(  # pyright: ignore[reportReturnType]
        self, *, files: RecordFiles, cloud: PointCloud
    ) -> np.ndarray:
        """
        Score one cloud.

        Args:
            files: Accessors for the record the cloud belongs to.
            cloud: The cloud, in world frame with normals and curvature.

        Returns:
            An ``(N,)`` array of per-point scores.
        """


@dataclass(frozen=True)
class ModelScorer:
    """Scores with a trained network, in the frame the network was trained in."""

    net: ScorerNetwork
    name: str = "model"

    def __call__(self, *, files: RecordFiles, cloud: PointCloud) -> np.ndarray:
        inputs = network_input(cloud, self.net.cfg, files.camera())
        return predict_scores(inputs, self.net)


@dataclass(frozen=True)
class RandomScorer:
    """Uniform random scores; a floor any trained scorer should clear."""

    seed: int = 0
    name: str = "random"

    def __call__(self, *, files: RecordFiles, cloud: PointCloud) -> np.ndarray:
        key = zlib.crc32(files.record.id.encode())
        rng = np.random.default_rng(derive_seed(self.seed, key))
        return rng.random(len(cloud))


@dataclass(frozen=True)
class OracleScorer:
    """
    Scores with the record's own dense heatmap.

    Records that have not been densified are densified on the fly from their
    labeled candidates.
    """

    config: ToolkitConfig
    name: str = "oracle"

    def __call__(self, *, files: RecordFiles, cloud: PointCloud) -> np.ndarray:
        if files.record.heatmap_path is not None:
            return files.heatmap().values
        return densify_record(files, self.config.heatmap).values


def evaluate_record(
    base: Path,
    record: ManifestRecord,
    scorer: ScoreFunction,
    config: ToolkitConfig,
    k: int,
) -> CloudResult:
    """
    Execute the top-k proposals of one record's cloud.

    Proposals use geometric orientations, so the score function alone decides
    which points are tried.
    """
    files = RecordFiles(base, record)
    obj = files.object()
    state = files.state()
    cloud = files.cloud()
    scores = scorer(files=files, cloud=cloud)
    proposals = propose_grasps(
        cloud, scores, k, nms_radius=config.evaluation.nms_radius
    )

    outcomes = []
    for proposal in proposals:
        result = run_episode(
            obj, state, proposal.grasp, config.gripper, config.episode, record.joint
        )
        outcomes.append("success" if result.success else str(result.failure_reason))
    successes = outcomes.count("success")

    yaw, _, distance = files.camera().angles()
    return CloudResult(
        record_id=record.id,
        instance_id=record.instance_id,
        kind=record.kind,
        split=record.split,
        state_id=record.state_id,
        closed=record.closed,
        distance=distance,
        yaw=yaw,
        proposals=len(outcomes),
        successes=successes,
        rate=successes / len(outcomes) if outcomes else 0.0,
        outcomes=outcomes,
    )


def _evaluate_or_none(
    base: Path,
    record: ManifestRecord,
    scorer: ScoreFunction,
    config: ToolkitConfig,
    k: int,
) -> CloudResult | None:
    try:
        return evaluate_record(base, record, scorer, config, k)
    except AOGraspError as exc:
        logger.warning("record %s could not be evaluated: %s", record.id, exc)
        return None


def write_per_cloud_csv(path: Path, results: list[CloudResult]) -> None:
    fields = [
        "record_id",
        "instance_id",
        "kind",
        "split",
        "state_id",
        "closed",
        "distance",
        "yaw",
        "proposals",
        "successes",
        "rate",
    ]
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for result in results:
        writer.writerow(result.model_dump(include=set(fields)))
    path.write_text(buffer.getvalue())


async def run_evaluation(
    *,
    scorer: ScoreFunction,
    manifest_location: Path,
    output_data_path: Path | None = None,
    split: str | None = "test",
    k: int | None = None,
    workers: int | None = None,
) -> EvalReport:
    """
    Evaluate ``scorer`` over the manifest's records and write the report.

    Args:
        scorer: The score function under evaluation.
        manifest_location: Manifest file or the dataset directory holding it.
        output_data_path: Report directory, defaults to ``runs/<timestamp>``.
        split: Only records of this split; None for every record.
        k: Proposals per cloud, defaults to the configured top-k.
        workers: Worker processes, defaults to the configured count.

    Returns:
        The aggregated report, also written as JSON and per-cloud CSV.
    """
    path = manifest_path(manifest_location)
    base = path.parent
    manifest = load_manifest(path)
    config = manifest.config
    k = k or config.evaluation.top_k
    workers = workers or worker_count(config)
    records = manifest.ok_records(split)
    if not records:
        raise DatasetError(f"no usable records for split {split!r} in {path}")

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    output_path = output_data_path or root() / f"runs/{timestamp}"
    output_path.mkdir(parents=True, exist_ok=True)
    logger.info(
        "evaluating %s on %d record(s), k=%d, writing to %s",
        scorer.name,
        len(records),
        k,
        output_path,
    )

    evaluate = partial(_evaluate_or_none, base, scorer=scorer, config=config, k=k)
    if workers <= 1:
        outcomes = [evaluate(record) for record in records]
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = await tqdm_asyncio.gather(
                *(loop.run_in_executor(pool, evaluate, record) for record in records),
                desc="evaluate",
                disable=None,
            )

    results = [result for result in outcomes if result is not None]
    failed = [
        record.id
        for record, result in zip(records, outcomes, strict=True)
        if result is None
    ]
    report = calculate_stats(
        results,
        scorer=scorer.name,
        k=k,
        split=split,
        evaluation=config.evaluation,
        viewpoints=config.render.viewpoints,
        failed_records=failed,
    )

    # save the results
    _ = (output_path / REPORT_JSON_NAME).write_text(report.model_dump_json(indent=4))
    write_per_cloud_csv(output_path / REPORT_CSV_NAME, report.records)
    return report
