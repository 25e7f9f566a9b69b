"""Deterministic, tie-aware ranking metrics for embedding evaluation."""

from .distances import pairwise_distances
from .errors import EvaluationError, InvariantViolation, SingletonQueryError
from .ranking_metrics import (
    FAVORABLE,
    STABLE,
    UNFAVORABLE,
    CorrectMatrix,
    RelevanceMatrix,
    TiePolicy,
    average_precision,
    evaluate_map,
    mean_average_precision,
    precision_at_k,
    precision_recall,
    rank_correct,
    relevance,
)
from .tie_bounds import MapBounds, epsilon_select, map_bounds, perturbation
from .tie_expectation import EquidistantRun, ExpectationResult, expected_map, extract_runs, run_expected_contribution

__all__ = [
    "CorrectMatrix", "EquidistantRun", "EvaluationError", "ExpectationResult", "FAVORABLE",
    "InvariantViolation", "MapBounds", "RelevanceMatrix", "STABLE", "SingletonQueryError",
    "TiePolicy", "UNFAVORABLE", "average_precision", "epsilon_select", "evaluate_map",
    "expected_map", "extract_runs", "map_bounds", "mean_average_precision",
    "pairwise_distances", "perturbation", "precision_at_k", "precision_recall",
    "rank_correct", "relevance", "run_expected_contribution",
]
