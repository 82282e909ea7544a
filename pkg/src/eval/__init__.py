"""Evaluation of point scorers by executing their top-k grasp proposals."""

from .eval import ModelScorer, OracleScorer, RandomScorer, run_evaluation

__all__ = ["ModelScorer", "OracleScorer", "RandomScorer", "run_evaluation"]
