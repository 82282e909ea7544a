import argparse

from eval.eval import OracleScorer, ScoreFunction
from eval.main import run_evaluation_with_scorer
from pipeline.manifest import load_manifest


def oracle_scorer(args: argparse.Namespace) -> ScoreFunction:
    """Scores each cloud with its own ground-truth heatmap."""
    return OracleScorer(config=load_manifest(args.manifest, check_files=False).config)


def main():
    """
    Upper reference: how well the labels themselves rank grasp points.
    """
    run_evaluation_with_scorer(
        oracle_scorer, description="Evaluate ground-truth heatmaps as scores"
    )


if __name__ == "__main__":
    main()
