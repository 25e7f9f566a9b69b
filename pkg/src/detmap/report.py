"""End-to-end evaluation and the JSON report it produces."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .collision_audit import collision_counts
from .distances import normalize_precision, pairwise_distances
from .errors import EvaluationError, InvariantViolation
from .ranking_metrics import STABLE, TiePolicy, mean_of, per_query_ap, precision_at_k, rank_correct, relevance
from .tie_bounds import map_bounds
from .tie_expectation import DEFAULT_BUDGET, DEFAULT_SAMPLES, expected_map

SCORES = ("map_minus", "map", "map_plus", "expected_map")


@dataclass
class DatasetBundle:
    """Inputs of one evaluation.

    With ``leave_one_out`` the ``database`` embeddings double as queries and
    each sample is excluded from its own ranking; ``queries`` must be None.
    """

    database: np.ndarray
    db_labels: list
    queries: np.ndarray | None = None
    query_labels: list | None = None
    leave_one_out: bool = False
    metric: str = "euclidean"
    precision: str = "double"
    tie_policy: TiePolicy = STABLE

    def __post_init__(self):
        self.database = np.asarray(self.database, dtype=np.float64)
        if len(self.db_labels) != len(self.database):
            raise EvaluationError(
                f"{len(self.db_labels)} labels for {len(self.database)} database embeddings")
        if self.leave_one_out:
            if self.queries is not None:
                raise EvaluationError("leave-one-out evaluation takes a single embedding set")
        elif self.queries is None:
            raise EvaluationError("queries are required unless evaluating leave-one-out")
        else:
            self.queries = np.asarray(self.queries, dtype=np.float64)
            if self.query_labels is None or len(self.query_labels) != len(self.queries):
                raise EvaluationError("query labels must match the query embeddings")
        self.precision = normalize_precision(self.precision)

    def matrices(self):
        """Distance and relevance matrices; the only place distances are computed."""
        if self.leave_one_out:
            D = pairwise_distances(self.database, self.database, self.metric, self.precision)
            R = relevance(self.db_labels, self.db_labels, range(len(self.db_labels)))
        else:
            D = pairwise_distances(self.queries, self.database, self.metric, self.precision)
            R = relevance(self.query_labels, self.db_labels)
        return D, R


@dataclass
class EvaluationReport:
    map: float
    map_minus: float
    map_plus: float
    expected_map: float
    expected_exact: bool
    expected_samples: int
    epsilon_used: float
    precision_at_k: dict
    collisions: dict
    metric: str
    precision: str
    tie_policy: str
    queries: int
    database: int
    score_name: str = "map_minus"
    per_query: list | None = field(default=None)

    @property
    def score(self) -> float:
        return getattr(self, self.score_name)

    def check(self):
        if not self.epsilon_used > 0:
            raise InvariantViolation("epsilon_used must be positive")
        if not self.map_minus <= self.map <= self.map_plus:
            raise InvariantViolation(
                f"mAP {self.map!r} outside [{self.map_minus!r}, {self.map_plus!r}]")
        if self.expected_exact and not self.map_minus <= self.expected_map <= self.map_plus:
            raise InvariantViolation(
                f"expected mAP {self.expected_map!r} outside [{self.map_minus!r}, {self.map_plus!r}]")

    def to_dict(self) -> dict:
        out = {
            "score": {"name": self.score_name, "value": self.score},
            "map": self.map,
            "map_minus": self.map_minus,
            "map_plus": self.map_plus,
            "expected_map": {"value": self.expected_map, "exact": self.expected_exact,
                             "samples": self.expected_samples},
            "epsilon_used": self.epsilon_used,
            "precision_at_k": {str(k): v for k, v in self.precision_at_k.items()},
            "collisions": self.collisions,
            "metric": self.metric,
            "precision": self.precision,
            "tie_policy": self.tie_policy,
            "queries": self.queries,
            "database": self.database,
        }
        if self.per_query is not None:
            out["per_query"] = self.per_query
        return out


def run_evaluate(bundle: DatasetBundle, budget: int = DEFAULT_BUDGET, seed: int = 0,
                 samples: int = DEFAULT_SAMPLES, ks=(1, 10), threshold: float = 1e-10,
                 score: str = "map_minus", per_query: bool = False) -> EvaluationReport:
    """Distances -> relevance -> mAP, bounds, expectation and collision summary."""
    if score not in SCORES:
        raise EvaluationError(f"unknown score {score!r}; choose from {SCORES}")
    D, R = bundle.matrices()
    C = rank_correct(D, R, bundle.tie_policy)
    aps = per_query_ap(C)
    bounds = map_bounds(D, R)
    exp = expected_map(D, R, budget=budget, seed=seed, samples=samples)
    depth = int(C.lengths.min())
    p_at = {k: mean_of(precision_at_k(C, k)) for k in ks if 1 <= k <= depth}
    coll = collision_counts(D, R, threshold)

    rows = None
    if per_query:
        rows = [{"query": q, "ap": float(a), "expected_ap": float(e)}
                for q, (a, e) in enumerate(zip(aps, exp.per_query))]
    report = EvaluationReport(
        map=mean_of(aps),
        map_minus=bounds.map_minus,
        map_plus=bounds.map_plus,
        expected_map=exp.expected_map,
        expected_exact=exp.exact,
        expected_samples=exp.samples_used,
        epsilon_used=bounds.epsilon_used,
        precision_at_k=p_at,
        collisions=coll.to_dict(),
        metric=bundle.metric,
        precision=bundle.precision,
        tie_policy=str(bundle.tie_policy),
        queries=int(D.shape[0]),
        database=int(D.shape[1]),
        score_name=score,
        per_query=rows,
    )
    report.check()
    return report


def _fmt(x) -> str:
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise EvaluationError("cannot serialise a non-finite number")
        return f"{x:.16e}"  # 17 significant digits: round-trips every double
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    if isinstance(x, dict):
        items = ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items())
        return "{" + items + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def to_json(doc) -> str:
    """Deterministic JSON text with every real printed to 17 significant digits."""
    return _fmt(doc) + "\n"
