"""Report generation: Markdown summaries of evaluation runs and datasets."""

import argparse
import logging
from collections import Counter
from pathlib import Path

from pydantic import BaseModel

from core.dependencies import settings
from core.errors import DatasetError
from core.log import configure_logging
from eval.eval import REPORT_JSON_NAME
from eval.metrics.models import BinSummary, EvalReport, SuccessRateMetric
from pipeline.manifest import DatasetManifest

logger = logging.getLogger(__name__)

REPORT_MD_NAME = "report.md"


class ManifestStats(BaseModel):
    """
    Counts describing a generated dataset.

    Attributes:
        records (int): Records in the manifest, failed ones included.
        failed (int): Records whose state job failed.
        instances (int): Distinct instances.
        by_split (dict[str, int]): Usable records per split.
        by_kind (dict[str, int]): Usable records per procedural kind.
        candidates (int): Labeled grasp candidates over usable records.
        successes (int): Successful candidates over usable records.
        densified (int): Usable records with a heatmap.
        correspondence_links (int): Partner links over usable records.
    """

    records: int
    failed: int
    instances: int
    by_split: dict[str, int]
    by_kind: dict[str, int]
    candidates: int
    successes: int
    densified: int
    correspondence_links: int

    @property
    def success_ratio(self) -> float:
        return self.successes / self.candidates if self.candidates else 0.0


def manifest_stats(manifest: DatasetManifest) -> ManifestStats:
    ok = manifest.ok_records()
    return ManifestStats(
        records=len(manifest.records),
        failed=len(manifest.records) - len(ok),
        instances=len({record.instance_id for record in manifest.records}),
        by_split=dict(sorted(Counter(record.split for record in ok).items())),
        by_kind=dict(
            sorted(Counter(str(record.kind) for record in ok).items())
        ),
        candidates=sum(record.candidates for record in ok),
        successes=sum(record.successes for record in ok),
        densified=sum(record.heatmap_path is not None for record in ok),
        correspondence_links=sum(len(record.correspondences) for record in ok),
    )


def render_manifest_stats(stats: ManifestStats) -> str:
    lines = [
        "# Dataset",
        "",
        f"- records: {stats.records} ({stats.failed} failed)",
        f"- instances: {stats.instances}",
        f"- labeled candidates: {stats.candidates}, "
        f"successful: {stats.successes} ({stats.success_ratio:.1%})",
        f"- densified records: {stats.densified}",
        f"- correspondence links: {stats.correspondence_links}",
        "",
        "| split | records |",
        "| --- | --- |",
        *(f"| {split} | {count} |" for split, count in stats.by_split.items()),
        "",
        "| kind | records |",
        "| --- | --- |",
        *(f"| {kind} | {count} |" for kind, count in stats.by_kind.items()),
    ]
    return "\n".join(lines) + "\n"


def _rate(metric: SuccessRateMetric) -> str:
    if metric.count == 0:
        return "n/a | 0"
    return f"{metric.mean:.3f} ± {metric.std:.3f} | {metric.count}"


def _bins(title: str, unit: str, bins: list[BinSummary]) -> list[str]:
    return [
        f"## {title}",
        "",
        "| range | success rate | clouds |",
        "| --- | --- | --- |",
        *(
            f"| [{b.low:.2f}, {b.high:.2f}) {unit} | {_rate(b.success_rate)} |"
            for b in bins
        ),
        "",
    ]


def _groups(title: str, groups: dict[str, SuccessRateMetric]) -> list[str]:
    return [
        f"## {title}",
        "",
        "| group | success rate | clouds |",
        "| --- | --- | --- |",
        *(f"| {name} | {_rate(metric)} |" for name, metric in groups.items()),
        "",
    ]


def render_report(report: EvalReport) -> str:
    """Markdown rendering of an evaluation report."""
    split = report.split or "all"
    lines = [
        f"# Top-{report.k} grasp success: {report.scorer} ({split} split)",
        "",
        f"> {report.note}",
        "",
        "| group | success rate | clouds |",
        "| --- | --- | --- |",
        f"| overall | {_rate(report.overall)} |",
        f"| closed states | {_rate(report.closed)} |",
        f"| open states | {_rate(report.open)} |",
        "",
        *_bins("By camera distance", "m", report.distance_bins),
        *_bins("By camera yaw", "deg", report.yaw_bins),
        *_groups("By split", report.by_split),
        *_groups("By kind", report.by_kind),
        "## Episode outcomes",
        "",
        "| outcome | proposals |",
        "| --- | --- |",
        *(f"| {name} | {count} |" for name, count in report.failure_reasons.items()),
        "",
    ]
    if report.failed_records:
        lines += [
            f"{len(report.failed_records)} record(s) could not be evaluated: "
            + ", ".join(report.failed_records),
            "",
        ]
    return "\n".join(lines)


def generate_report(data_path: Path, out_path: Path | None = None) -> Path:
    """
    Render ``evaluation_results.json`` as Markdown.

    Args:
        data_path: The report JSON or the evaluation run directory holding it.
        out_path: Markdown file to write, defaults to ``report.md`` beside it.
    """
    path = data_path / REPORT_JSON_NAME if data_path.is_dir() else data_path
    if not path.is_file():
        raise DatasetError(f"evaluation results not found: {path}")
    report = EvalReport.model_validate_json(path.read_text(encoding="utf-8"))
    target = out_path or path.parent / REPORT_MD_NAME
    _ = target.write_text(render_report(report), encoding="utf-8")
    logger.info("wrote %s", target)
    return target


def main():
    """Main entry point for report generation."""
    parser = argparse.ArgumentParser(description="Generate evaluation reports")
    parser.add_argument(
        "--data_path",
        type=Path,
        required=True,
        help="Evaluation run directory or its evaluation_results.json",
    )
    parser.add_argument("--out", type=Path, help="Markdown output path")

    args = parser.parse_args()
    configure_logging(settings().log_level)
    print(generate_report(args.data_path, args.out))


if __name__ == "__main__":
    main()
