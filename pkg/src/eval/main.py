import argparse
import asyncio
from collections.abc import Callable
from pathlib import Path

from core.checkpoint import load_checkpoint
from core.dependencies import settings
from core.log import configure_logging
from eval.eval import ModelScorer, ScoreFunction, run_evaluation
from eval.metrics.models import EvalReport
from pipeline.manifest import load_manifest

ScorerFactory = Callable[[argparse.Namespace], ScoreFunction]


def build_parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument(
        "manifest", type=Path, help="Dataset directory or its manifest.json"
    )
    parser.add_argument(
        "--out",
        type=Path,
        required=False,
        help="Report directory (optional, defaults to runs/<timestamp>)",
    )
    parser.add_argument(
        "--split",
        default="test",
        help="Split to evaluate, or 'all' for every record (default: test)",
    )
    parser.add_argument("-k", type=int, help="Proposals per cloud")
    parser.add_argument("--workers", type=int, help="Worker processes")
    return parser


def run_evaluation_with_scorer(
    scorer_factory: ScorerFactory,
    description: str = "Evaluate a scorer on a dataset manifest",
    parser: argparse.ArgumentParser | None = None,
) -> EvalReport:
    """
    Reusable main function that parses command line arguments and runs the evaluation.

    Args:
        scorer_factory: Builds the score function from the parsed arguments.
        description: Help text of the default parser.
        parser: A parser with extra arguments, built on ``build_parser``.
    """
    parser = parser or build_parser(description)
    args = parser.parse_args()
    configure_logging(settings().log_level)
    report = asyncio.run(
        run_evaluation(
            scorer=scorer_factory(args),
            manifest_location=args.manifest,
            output_data_path=args.out,
            split=None if args.split == "all" else args.split,
            k=args.k,
            workers=args.workers,
        )
    )
    print(
        f"{report.scorer}: top-{report.k} success rate "
        f"{report.overall.mean:.3f} ± {report.overall.std:.3f} "
        f"over {report.overall.count} cloud(s)"
    )
    return report


def model_scorer(args: argparse.Namespace) -> ScoreFunction:
    expected = load_manifest(args.manifest, check_files=False).config.encoder
    net, _ = load_checkpoint(args.checkpoint, expected)
    return ModelScorer(net=net)


def main():
    """
    Evaluate a trained checkpoint.
    """
    parser = build_parser("Evaluate a trained scorer checkpoint")
    parser.add_argument("--checkpoint", type=Path, required=True)
    run_evaluation_with_scorer(model_scorer, parser=parser)


if __name__ == "__main__":
    main()
