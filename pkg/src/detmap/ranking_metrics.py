"""Relevance, tie-aware ranking and the precision-based metrics built on it.

The pipeline is::

    R = relevance(query_labels, db_labels, self_map)
    C = rank_correct(D, R, policy)
    mean_average_precision(C)

``D`` is always a distance matrix (ascending sort). Similarity matrices must be
negated before they enter the pipeline.

All AP/mAP sums go through :func:`math.fsum`, which is correctly rounded and
therefore independent of summation order; mAP additionally sorts the per-query
APs first. The result is bit-identical under any permutation of the queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EvaluationError, SingletonQueryError


@dataclass(frozen=True)
class TiePolicy:
    """How ``rank_correct`` orders database items at exactly equal distance.

    ``stable``: ascending database index. ``favorable``: relevant first.
    ``unfavorable``: non-relevant first. ``shuffle``: uniformly random order
    inside each tie group, drawn from a generator seeded with ``seed``.
    """

    kind: str = "stable"
    seed: int | None = None

    KINDS = ("stable", "favorable", "unfavorable", "shuffle")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise EvaluationError(f"unknown tie policy {self.kind!r}")
        if self.kind == "shuffle" and self.seed is None:
            raise EvaluationError("shuffle tie policy needs a seed")

    @classmethod
    def parse(cls, text: str) -> "TiePolicy":
        """Parse ``stable``, ``favorable``, ``unfavorable`` or ``shuffle:SEED``."""
        aliases = {"stable-by-index": "stable", "seeded-shuffle": "shuffle"}
        if ":" in text:
            kind, _, seed = text.partition(":")
            kind = aliases.get(kind, kind)
            try:
                return cls(kind, int(seed))
            except ValueError:
                raise EvaluationError(f"bad tie policy seed in {text!r}") from None
        return cls(aliases.get(text, text))

    def __str__(self):
        return f"shuffle:{self.seed}" if self.kind == "shuffle" else self.kind


STABLE = TiePolicy("stable")
FAVORABLE = TiePolicy("favorable")
UNFAVORABLE = TiePolicy("unfavorable")


@dataclass(frozen=True)
class RelevanceMatrix:
    """Binary relevance ``values`` (Q, K) plus a mask of excluded self-matches."""

    values: np.ndarray
    excluded: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def counts(self) -> np.ndarray:
        """Relevant, non-excluded items per query."""
        return (self.values & ~self.excluded).sum(axis=1)


@dataclass(frozen=True)
class CorrectMatrix:
    """Relevance rows reordered by ascending distance.

    ``values[q, :lengths[q]]`` is the ranked relevance of query ``q`` and
    ``order[q, :lengths[q]]`` holds the database index at each rank. Cells past
    ``lengths[q]`` (excluded self-matches) are padding: 0 in ``values`` and -1
    in ``order``.
    """

    values: np.ndarray
    order: np.ndarray
    lengths: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def rows(self):
        for q in range(self.values.shape[0]):
            yield self.values[q, : self.lengths[q]]


def _self_map_array(self_map, n_queries: int, n_db: int) -> np.ndarray:
    out = np.full(n_queries, -1, dtype=np.int64)
    if self_map is None:
        return out
    if isinstance(self_map, Mapping):
        items = self_map.items()
    else:
        seq = list(self_map)
        if len(seq) != n_queries:
            raise EvaluationError(
                f"self_map has {len(seq)} entries for {n_queries} queries")
        items = enumerate(seq)
    for q, k in items:
        if k is None or k < 0:
            continue
        if not (0 <= q < n_queries and 0 <= k < n_db):
            raise EvaluationError(f"self_map pair ({q}, {k}) out of range")
        out[q] = k
    return out


def relevance(query_labels: Sequence, db_labels: Sequence, self_map=None,
              allow_empty: bool = False) -> RelevanceMatrix:
    """Build ``R[q, k] = (y(query q) == y(database k))`` with optional self-exclusion.

    ``self_map`` pairs each query index with the database index of the same
    sample (a mapping, or a sequence with -1/None for unpaired queries). Paired
    cells are excluded from every downstream ranking.

    Raises:
        SingletonQueryError: a query has no relevant item left after exclusion
            (unless ``allow_empty``, used by audits that never score the row).
    """
    ql = np.asarray(query_labels, dtype=object)
    dl = np.asarray(db_labels, dtype=object)
    if ql.ndim != 1 or dl.ndim != 1 or len(ql) == 0 or len(dl) == 0:
        raise EvaluationError("label vectors must be non-empty and one-dimensional")
    # factorise through a shared vocabulary so comparison is on integers
    vocab: dict = {}
    qi = np.array([vocab.setdefault(x, len(vocab)) for x in ql])
    di = np.array([vocab.setdefault(x, len(vocab)) for x in dl])
    values = qi[:, None] == di[None, :]

    excluded = np.zeros_like(values)
    pairs = _self_map_array(self_map, len(ql), len(dl))
    has = pairs >= 0
    excluded[np.nonzero(has)[0], pairs[has]] = True

    r = RelevanceMatrix(values, excluded)
    empty = np.nonzero(r.counts() == 0)[0]
    if len(empty) and not allow_empty:
        raise SingletonQueryError(empty)
    return r


def rank_correct(D, R: RelevanceMatrix, policy: TiePolicy = STABLE) -> CorrectMatrix:
    """Sort each relevance row by ascending distance, resolving ties per ``policy``."""
    D = np.asarray(D, dtype=np.float64)
    if D.shape != R.shape:
        raise EvaluationError(f"shape mismatch: D {D.shape} vs R {R.shape}")
    rel = R.values
    excl = R.excluded
    if policy.kind == "stable":
        tiebreak = None
    elif policy.kind == "favorable":
        tiebreak = ~rel
    elif policy.kind == "unfavorable":
        tiebreak = rel
    else:
        rng = np.random.default_rng(policy.seed)
        base = np.broadcast_to(np.arange(D.shape[1]), D.shape)
        tiebreak = rng.permuted(base, axis=1)

    # np.lexsort: last key is primary; stability falls back to column index
    keys = (D, excl) if tiebreak is None else (tiebreak, D, excl)
    order = np.lexsort(keys, axis=-1)
    values = np.take_along_axis(rel & ~excl, order, axis=1).astype(np.int8)
    lengths = (~excl).sum(axis=1)
    pad = np.arange(D.shape[1])[None, :] >= lengths[:, None]
    order = np.where(pad, -1, order)
    return CorrectMatrix(values, order, lengths)


def precision_recall(C: CorrectMatrix):
    """Precision and recall matrices ``(Pr, Rc)``; padding cells are NaN."""
    vals = C.values.astype(np.int64)
    hits = np.cumsum(vals, axis=1)
    total = hits[:, -1]
    if (total == 0).any():
        raise SingletonQueryError(np.nonzero(total == 0)[0])
    ranks = np.arange(1, vals.shape[1] + 1)
    pr = hits / ranks[None, :]
    rc = hits / total[:, None]
    pad = ranks[None, :] > C.lengths[:, None]
    pr[pad] = np.nan
    rc[pad] = np.nan
    return pr, rc


def average_precision(c_row) -> float:
    """Mean of the precision values at the ranks holding a relevant item."""
    c = np.asarray(c_row).astype(bool)
    n_rel = int(c.sum())
    if n_rel == 0:
        raise EvaluationError("average precision undefined for a row without relevant items")
    ranks = np.flatnonzero(c) + 1
    hits = np.arange(1, n_rel + 1)
    return math.fsum(hits / ranks) / n_rel


def per_query_ap(C: CorrectMatrix) -> np.ndarray:
    aps = np.empty(C.shape[0])
    for q, row in enumerate(C.rows()):
        aps[q] = average_precision(row)
    return aps


def mean_of(values) -> float:
    """Order-independent mean: sorted, then correctly-rounded summation."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return math.fsum(v) / len(v)


def mean_average_precision(C: CorrectMatrix) -> float:
    return mean_of(per_query_ap(C))


def precision_at_k(C: CorrectMatrix, k: int) -> np.ndarray:
    """Per-query precision at rank ``k`` (1-based)."""
    shortest = int(C.lengths.min())
    if not 1 <= k <= shortest:
        raise EvaluationError(f"rank k={k} outside [1, {shortest}]")
    return C.values[:, :k].sum(axis=1) / k


def evaluate_map(D, R: RelevanceMatrix, policy: TiePolicy = STABLE) -> float:
    """Convenience: mAP of ``D`` ranked under ``policy``."""
    return mean_average_precision(rank_correct(D, R, policy))
