"""Deterministic mAP bounds under every resolution of equidistant items.

Non-relevant distances are shifted by a constant ``epsilon`` that is smaller
than any genuine gap inside a query row::

    E = (1 - R) * epsilon
    D_plus = D + E      # relevant items win every tie  -> map_plus
    D_minus = D - E     # non-relevant items win        -> map_minus

Strictly ordered pairs keep their order, so only ties between relevant and
non-relevant items are resolved, in the most and least favourable way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, InvariantViolation
from .ranking_metrics import (
    FAVORABLE,
    STABLE,
    UNFAVORABLE,
    RelevanceMatrix,
    mean_average_precision,
    rank_correct,
)


@dataclass(frozen=True)
class MapBounds:
    map_minus: float
    map_plus: float
    epsilon_used: float


def min_positive_gap(D, excluded=None) -> float | None:
    """Smallest strictly positive difference between two distances of one row."""
    D = np.asarray(D, dtype=np.float64)
    if excluded is not None:
        D = np.where(excluded, np.nan, D)
    s = np.sort(D, axis=1)  # NaN sorts last
    gaps = np.diff(s, axis=1)
    gaps = gaps[np.isfinite(gaps) & (gaps > 0)]
    return float(gaps.min()) if gaps.size else None


def epsilon_select(D, excluded=None) -> float:
    """Half the minimum positive within-row gap of ``D``; 1.0 if no row has a gap."""
    g = min_positive_gap(D, excluded)
    if g is None:
        return 1.0
    eps = g / 2
    if eps <= 0:
        # g is the smallest subnormal; no representable shift fits inside it
        raise EvaluationError("distance gaps too small to separate ties")
    return eps


def perturbation(R: RelevanceMatrix, epsilon: float) -> np.ndarray:
    """``E = (1 - R) * epsilon`` as a float64 matrix."""
    if not epsilon > 0:
        raise EvaluationError(f"epsilon must be positive, got {epsilon}")
    return (~R.values).astype(np.float64) * epsilon


def _bound(D, R: RelevanceMatrix, eps: float, sign: int, exact_policy) -> float:
    shifted = rank_correct(D + sign * perturbation(R, eps), R, STABLE)
    exact = rank_correct(D, R, exact_policy)
    if not np.array_equal(shifted.values, exact.values):
        # float rounding swallowed or overshot the shift (gaps of one ulp);
        # the lexicographic tie resolution is its exact-arithmetic value
        shifted = exact
    return mean_average_precision(shifted)


def map_bounds(D, R: RelevanceMatrix, epsilon: float | None = None) -> MapBounds:
    """Compute ``map_minus`` and ``map_plus`` of ``D`` under relevance ``R``.

    Args:
        D: (Q, K) distance matrix.
        R: relevance matrix of the same shape.
        epsilon: optional override. It must be positive and smaller than the
            smallest positive gap inside any row, otherwise it would reorder
            items that are not tied.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.shape != R.shape:
        raise EvaluationError(f"shape mismatch: D {D.shape} vs R {R.shape}")
    if epsilon is None:
        eps = epsilon_select(D, R.excluded)
    else:
        if not epsilon > 0:
            raise EvaluationError(f"epsilon must be positive, got {epsilon}")
        gap = min_positive_gap(D, R.excluded)
        if gap is not None and epsilon >= gap:
            raise EvaluationError(
                f"epsilon {epsilon!r} is not below the smallest distance gap {gap!r}")
        eps = float(epsilon)

    plus = _bound(D, R, eps, +1, FAVORABLE)
    minus = _bound(D, R, eps, -1, UNFAVORABLE)
    if minus > plus:
        raise InvariantViolation(f"map_minus {minus!r} exceeds map_plus {plus!r}")
    return MapBounds(map_minus=minus, map_plus=plus, epsilon_used=eps)


def perturbed_correct(D, R: RelevanceMatrix, epsilon: float, sign: int):
    """Correct matrix of ``D + sign * E``; exposed for audits and tests."""
    E = perturbation(R, epsilon)
    return rank_correct(np.asarray(D, dtype=np.float64) + sign * E, R, STABLE)
