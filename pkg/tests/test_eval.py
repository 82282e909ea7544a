import json
from pathlib import Path

import numpy as np
import pytest

from core.checkpoint import load_checkpoint
from core.config import EvaluationConfig, ViewpointRange
from core.errors import DatasetError
from eval.eval import (
    REPORT_CSV_NAME,
    REPORT_JSON_NAME,
    ModelScorer,
    OracleScorer,
    RandomScorer,
    run_evaluation,
)
from eval.metrics.models import CloudResult
from eval.metrics.success_rate import (
    REPORT_NOTE,
    bin_results,
    calculate_stats,
    success_rate,
)
from pipeline.manifest import RecordFiles, load_manifest


def cloud_result(
    rid: str,
    rate: float,
    *,
    closed: bool = True,
    distance: float = 1.5,
    yaw: float = 0.0,
    kind: str | None = "drawer",
) -> CloudResult:
    successes = round(rate * 4)
    return CloudResult(
        record_id=rid,
        instance_id=rid.split("/")[0],
        kind=kind,
        split="test",
        state_id=0 if closed else 1,
        closed=closed,
        distance=distance,
        yaw=yaw,
        proposals=4,
        successes=successes,
        rate=successes / 4,
        outcomes=["success"] * successes + ["wrong_link"] * (4 - successes),
    )


def test_success_rate_of_an_empty_group():
    metric = success_rate([])
    assert (metric.mean, metric.std, metric.count) == (0.0, 0.0, 0)


def test_success_rate_mean_and_population_std():
    # Act
    metric = success_rate([cloud_result("a", 0.5), cloud_result("b", 1.0)])

    # Assert
    assert metric.mean == pytest.approx(0.75)
    assert metric.std == pytest.approx(0.25)
    assert metric.count == 2


def test_out_of_range_values_land_in_the_edge_bins():
    # Arrange
    results = [cloud_result(str(i), 0.5) for i in range(4)]
    values = np.array([-5.0, 0.5, 1.0, 9.0])

    # Act
    bins = bin_results(results, values, np.array([0.0, 1.0, 2.0]))

    # Assert
    assert [b.success_rate.count for b in bins] == [2, 2]
    assert (bins[0].low, bins[0].high) == (0.0, 1.0)


def test_report_groups_sum_to_the_evaluated_clouds():
    # Arrange
    results = [
        cloud_result("a/s0/v0", 1.0, distance=1.25, yaw=-50.0),
        cloud_result("a/s1/v0", 0.25, closed=False, distance=1.75, yaw=10.0),
        cloud_result("b/s0/v0", 0.0, distance=1.5, yaw=55.0, kind="cabinet_door"),
    ]

    # Act
    report = calculate_stats(
        results,
        scorer="random",
        k=4,
        split="test",
        evaluation=EvaluationConfig(),
        viewpoints=ViewpointRange(),
        failed_records=["c/s0/v0"],
    )

    # Assert
    assert report.note == REPORT_NOTE
    assert report.overall.count == 3
    assert report.closed.count + report.open.count == 3
    assert sum(b.success_rate.count for b in report.distance_bins) == 3
    assert sum(b.success_rate.count for b in report.yaw_bins) == 3
    assert report.yaw_bins[0].low == pytest.approx(-60.0)
    assert report.failure_reasons == {"success": 5, "wrong_link": 7}
    assert set(report.by_kind) == {"cabinet_door", "drawer"}
    assert report.open.mean == pytest.approx(0.25)
    assert report.failed_records == ["c/s0/v0"]


def test_random_scores_are_reproducible_per_record(dataset_dir: Path):
    # Arrange
    manifest = load_manifest(dataset_dir)
    first, second = manifest.ok_records()[:2]
    files = RecordFiles(dataset_dir, first)
    cloud = files.cloud()
    scorer = RandomScorer(seed=4)

    # Act
    once = scorer(files=files, cloud=cloud)
    again = scorer(files=files, cloud=cloud)
    other = scorer(files=RecordFiles(dataset_dir, second), cloud=cloud)

    # Assert
    np.testing.assert_array_equal(once, again)
    assert not np.array_equal(once, other)
    assert np.all((once >= 0.0) & (once < 1.0))


def test_oracle_densifies_records_without_heatmaps(dataset_dir: Path):
    # Arrange
    manifest = load_manifest(dataset_dir)
    files = RecordFiles(dataset_dir, manifest.ok_records()[0])
    cloud = files.cloud()

    # Act
    scores = OracleScorer(config=manifest.config)(files=files, cloud=cloud)

    # Assert
    assert scores.shape == (len(cloud),)
    assert np.all((scores >= 0.0) & (scores <= 1.0))


async def test_evaluation_writes_consistent_reports(dataset_dir: Path, tmp_path: Path):
    # Act
    report = await run_evaluation(
        scorer=RandomScorer(seed=1),
        manifest_location=dataset_dir,
        output_data_path=tmp_path,
        workers=1,
    )

    # Assert
    test_records = load_manifest(dataset_dir).ok_records("test")
    assert report.k == 3
    assert report.split == "test"
    assert report.overall.count + len(report.failed_records) == len(test_records)
    assert 0.0 <= report.overall.mean <= 1.0
    assert sum(b.success_rate.count for b in report.distance_bins) == (
        report.overall.count
    )
    for result in report.records:
        assert result.proposals <= 3
        assert len(result.outcomes) == result.proposals
        assert 0.0 <= result.rate <= 1.0
    stored = json.loads((tmp_path / REPORT_JSON_NAME).read_text(encoding="utf-8"))
    assert stored["note"] == REPORT_NOTE
    rows = (tmp_path / REPORT_CSV_NAME).read_text(encoding="utf-8").splitlines()
    assert len(rows) == 1 + report.overall.count


async def test_trained_model_and_oracle_scorers_run(
    dataset_dir: Path, checkpoint_path: Path, tmp_path: Path
):
    # Arrange
    config = load_manifest(dataset_dir).config
    net, _ = load_checkpoint(checkpoint_path, config.encoder)

    # Act
    model = await run_evaluation(
        scorer=ModelScorer(net=net),
        manifest_location=dataset_dir,
        output_data_path=tmp_path / "model",
        split=None,
        k=2,
        workers=1,
    )
    oracle = await run_evaluation(
        scorer=OracleScorer(config=config),
        manifest_location=dataset_dir,
        output_data_path=tmp_path / "oracle",
        split=None,
        k=2,
        workers=1,
    )

    # Assert
    assert model.scorer == "model"
    assert oracle.scorer == "oracle"
    assert set(model.by_split) <= {"train", "test"}
    assert model.overall.count == oracle.overall.count


@pytest.mark.slow
async def test_parallel_evaluation_matches_serial(dataset_dir: Path, tmp_path: Path):
    # Act
    serial = await run_evaluation(
        scorer=RandomScorer(seed=2),
        manifest_location=dataset_dir,
        output_data_path=tmp_path / "serial",
        workers=1,
    )
    parallel = await run_evaluation(
        scorer=RandomScorer(seed=2),
        manifest_location=dataset_dir,
        output_data_path=tmp_path / "parallel",
        workers=2,
    )

    # Assert
    assert parallel.records == serial.records


async def test_unknown_split_has_nothing_to_evaluate(
    dataset_dir: Path, tmp_path: Path
):
    with pytest.raises(DatasetError):
        _ = await run_evaluation(
            scorer=RandomScorer(),
            manifest_location=dataset_dir,
            output_data_path=tmp_path,
            split="validation",
        )
