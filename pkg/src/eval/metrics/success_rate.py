from collections import Counter
from collections.abc import Sequence

import numpy as np

from core.config import EvaluationConfig, ViewpointRange
from eval.metrics.models import BinSummary, CloudResult, EvalReport, SuccessRateMetric

REPORT_NOTE = (
    "Success rates are internal metrics from the toolkit's kinematic grasp "
    "episodes; they are not comparable with physics-simulation or real-robot "
    "success rates."
)


def success_rate(results: Sequence[CloudResult]) -> SuccessRateMetric:
    """Mean and population std of per-cloud rates; zeros for an empty group."""
    if not results:
        return SuccessRateMetric(mean=0.0, std=0.0, count=0)
    rates = np.array([result.rate for result in results])
    return SuccessRateMetric(
        mean=float(np.clip(rates.mean(), 0.0, 1.0)),
        std=float(np.clip(rates.std(), 0.0, 1.0)) if len(rates) > 1 else 0.0,
        count=len(rates),
    )


def bin_results(
    results: Sequence[CloudResult], values: np.ndarray, edges: np.ndarray
) -> list[BinSummary]:
    """
    Group results into ``len(edges) - 1`` bins.

    Values outside the range fall into the first or last bin, so bin counts
    always sum to the number of results.
    """
    bins = len(edges) - 1
    index = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    return [
        BinSummary(
            low=float(edges[b]),
            high=float(edges[b + 1]),
            success_rate=success_rate(
                [r for r, i in zip(results, index, strict=True) if i == b]
            ),
        )
        for b in range(bins)
    ]


def _grouped(
    results: Sequence[CloudResult], key: str
) -> dict[str, SuccessRateMetric]:
    groups: dict[str, list[CloudResult]] = {}
    for result in results:
        groups.setdefault(str(getattr(result, key)), []).append(result)
    return {name: success_rate(group) for name, group in sorted(groups.items())}


def calculate_stats(
    results: Sequence[CloudResult],
    *,
    scorer: str,
    k: int,
    split: str | None,
    evaluation: EvaluationConfig,
    viewpoints: ViewpointRange,
    failed_records: Sequence[str] = (),
) -> EvalReport:
    """
    Aggregate per-cloud results into a report.

    Distance bins split the configured camera distance range evenly; yaw bins
    split the configured yaw span, centred on the object's front.
    """
    results = sorted(results, key=lambda r: r.record_id)
    low, high = viewpoints.distance_range
    if high <= low:
        high = low + 1e-9
    distance_edges = np.linspace(low, high, evaluation.distance_bins + 1)
    half = max(viewpoints.yaw_span_deg / 2, 1e-9)
    yaw_edges = np.linspace(-half, half, evaluation.yaw_bins + 1)

    reasons: Counter[str] = Counter()
    for result in results:
        reasons.update(result.outcomes)

    return EvalReport(
        note=REPORT_NOTE,
        scorer=scorer,
        k=k,
        split=split,
        records=list(results),
        overall=success_rate(results),
        closed=success_rate([r for r in results if r.closed]),
        open=success_rate([r for r in results if not r.closed]),
        distance_bins=bin_results(
            results, np.array([r.distance for r in results]), distance_edges
        ),
        yaw_bins=bin_results(results, np.array([r.yaw for r in results]), yaw_edges),
        failure_reasons=dict(sorted(reasons.items())),
        by_split=_grouped(results, "split"),
        by_kind=_grouped(results, "kind"),
        failed_records=sorted(failed_records),
    )
