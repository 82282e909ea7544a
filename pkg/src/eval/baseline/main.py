import argparse

from eval.eval import RandomScorer, ScoreFunction
from eval.main import build_parser, run_evaluation_with_scorer


def random_scorer(args: argparse.Namespace) -> ScoreFunction:
    """Uniform random point scores, reproducible per record from ``--seed``."""
    return RandomScorer(seed=args.seed)


def main():
    """
    Main function that runs the random-score baseline evaluation.
    """
    parser = build_parser("Evaluate uniform random scores as a baseline")
    parser.add_argument("--seed", type=int, default=0)
    run_evaluation_with_scorer(random_scorer, parser=parser)


if __name__ == "__main__":
    main()
