"""The all-zero embedding exploit and the random-embedding baseline.

A system that maps every input to the zero vector makes every distance equal,
so the measured mAP of a naive evaluator depends only on how it breaks ties.
With the stable-by-index policy the ranking of each query is the database order
minus the query itself, which the adversary controls through the order in which
it submits samples. ``map_minus`` is immune to that ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distances import pairwise_distances
from .errors import EvaluationError
from .ranking_metrics import STABLE, TiePolicy, evaluate_map, mean_of, relevance
from .tie_bounds import map_bounds
from .tie_expectation import DEFAULT_BUDGET, DEFAULT_SAMPLES, expected_map


@dataclass
class ExploitInstance:
    labels: np.ndarray
    sample_order: np.ndarray = None
    dim: int = 1000
    metric: str = "euclidean"

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.sample_order is None:
            self.sample_order = np.arange(len(self.labels))
        self.sample_order = np.asarray(self.sample_order, dtype=np.int64)
        if not np.array_equal(np.sort(self.sample_order), np.arange(len(self.labels))):
            raise EvaluationError("sample_order is not a permutation of the samples")
        _check_no_singletons(self.labels)

    @property
    def arranged_labels(self) -> np.ndarray:
        return self.labels[self.sample_order]


@dataclass
class BaselineSummary:
    repetitions: int
    mean_map: float
    std_map: float
    seed: int
    maps: list = field(default_factory=list)


def _check_no_singletons(labels):
    values, counts = np.unique(labels, return_counts=True)
    lonely = values[counts < 2]
    if len(lonely):
        raise EvaluationError(f"singleton classes cannot be queried: {list(lonely)[:10]}")


def class_labels(classes: int, per_class: int) -> np.ndarray:
    """``classes`` blocks of ``per_class`` identical labels, class-contiguous."""
    return np.repeat(np.arange(classes), per_class)


def evaluate_with_order(instance: ExploitInstance, policy: TiePolicy = STABLE) -> float:
    """Measured leave-one-out mAP of all-zero embeddings submitted in ``sample_order``."""
    labels = instance.arranged_labels
    emb = np.zeros((len(labels), instance.dim))
    D = pairwise_distances(emb, emb, instance.metric)
    R = relevance(labels, labels, range(len(labels)))
    return evaluate_map(D, R, policy)


def _class_precisions(pos: np.ndarray) -> np.ndarray:
    # [t, s]: precision at which class member s is retrieved for query t
    c = len(pos)
    s = np.arange(c)
    before = s[None, :] < s[:, None]  # member s precedes query t
    ranks = np.where(before, pos[None, :] + 1, pos[None, :])
    np.fill_diagonal(ranks, 1)  # the query itself, masked below
    hits = np.where(before, s[None, :] + 1, s[None, :])
    prec = hits / ranks
    np.fill_diagonal(prec, 0.0)
    return prec


def stable_tied_map(arranged_labels) -> float:
    """mAP of a fully tied leave-one-out matrix under the stable policy.

    Ranking for query ``t`` is the submission order without ``t``. For class
    members at positions ``p_0 < p_1 < ...`` the ``s``-th member sits at rank
    ``p_s + 1`` if it precedes the query and at ``p_s`` otherwise, and it is
    hit number ``s + 1`` or ``s`` respectively.
    """
    labels = np.asarray(arranged_labels)
    aps = []
    for cls in np.unique(labels):
        pos = np.flatnonzero(labels == cls)
        if len(pos) < 2:
            raise EvaluationError(f"singleton class {cls!r}")
        prec = _class_precisions(pos)
        aps.extend(math.fsum(row) / (len(pos) - 1) for row in prec)
    return mean_of(aps)


def favorable_order(labels) -> np.ndarray:
    """Class-contiguous blocks, classes in order of first appearance."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    rank_of = {labels[i]: r for r, i in enumerate(np.sort(first))}
    keys = np.array([rank_of[x] for x in labels])
    return np.argsort(keys, kind="stable")


def unfavorable_order(labels) -> np.ndarray:
    """Round-robin interleaving: one sample of each class in turn."""
    labels = np.asarray(labels)
    block = favorable_order(labels)
    arranged = labels[block]
    # occurrence index of each sample within its class, then class rank
    occ = np.empty(len(labels), dtype=np.int64)
    seen: dict = {}
    for i, x in enumerate(arranged):
        occ[i] = seen.get(x, 0)
        seen[x] = occ[i] + 1
    cls_rank = {x: r for r, x in enumerate(dict.fromkeys(arranged))}
    crank = np.array([cls_rank[x] for x in arranged])
    return block[np.lexsort((crank, occ))]


def search_order(labels, objective: str = "maximize", budget: int = 2000,
                 seed: int = 0) -> np.ndarray:
    """Hill-climb over pairwise swaps of the submission order.

    Starts from :func:`favorable_order` (maximize) or :func:`unfavorable_order`
    (minimize), proposes ``budget`` random swaps of two differently labelled
    samples and keeps a swap only when it strictly improves the objective.
    """
    if objective not in ("maximize", "minimize"):
        raise EvaluationError(f"objective must be maximize or minimize, got {objective!r}")
    labels = np.asarray(labels)
    _check_no_singletons(labels)
    order = favorable_order(labels) if objective == "maximize" else unfavorable_order(labels)
    if budget <= 0 or len(np.unique(labels)) < 2:
        return order
    sign = 1.0 if objective == "maximize" else -1.0
    _, codes = np.unique(labels, return_inverse=True)
    arranged = codes[order]

    def class_score(c):
        pos = np.flatnonzero(arranged == c)
        return float((_class_precisions(pos).sum(axis=1) / (len(pos) - 1)).sum())

    scores = {c: class_score(c) for c in np.unique(codes)}
    rng = np.random.default_rng(seed)
    n = len(order)
    for _ in range(budget):
        i, j = rng.integers(n, size=2)
        a, b = arranged[i], arranged[j]
        if a == b:
            continue
        arranged[i], arranged[j] = b, a
        sa, sb = class_score(a), class_score(b)
        # only the two swapped classes change their AP totals
        if sign * (sa + sb) > sign * (scores[a] + scores[b]):
            scores[a], scores[b] = sa, sb
            order[i], order[j] = order[j], order[i]
        else:
            arranged[i], arranged[j] = a, b
    return order


def random_baseline(labels, dim: int = 1000, repetitions: int = 30, seed: int = 0,
                    metric: str = "euclidean") -> BaselineSummary:
    """Leave-one-out mAP of uniform [0, 1) embeddings, repeated with seeded draws."""
    if repetitions < 1:
        raise EvaluationError("repetitions must be at least 1")
    labels = np.asarray(labels)
    R = relevance(labels, labels, range(len(labels)))
    maps = []
    for child in np.random.SeedSequence(seed).spawn(repetitions):
        emb = np.random.default_rng(child).random((len(labels), dim))
        D = pairwise_distances(emb, emb, metric)
        maps.append(evaluate_map(D, R, STABLE))
    mean = math.fsum(maps) / len(maps)
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in maps) / len(maps))
    return BaselineSummary(repetitions, mean, std, seed, maps)


def exploit_report(instance: ExploitInstance, baseline_reps: int = 30, seed: int = 0,
                   budget: int = DEFAULT_BUDGET, samples: int = DEFAULT_SAMPLES) -> dict:
    """Compare the exploitable measured mAP with the tie-robust scores."""
    labels = instance.arranged_labels
    emb = np.zeros((len(labels), instance.dim))
    D = pairwise_distances(emb, emb, instance.metric)
    R = relevance(labels, labels, range(len(labels)))
    bounds = map_bounds(D, R)
    exp = expected_map(D, R, budget=budget, seed=seed, samples=samples)
    report = {
        "samples": int(len(labels)),
        "classes": int(len(np.unique(labels))),
        "dim": int(instance.dim),
        "measured_map": evaluate_map(D, R, STABLE),
        "map_minus": bounds.map_minus,
        "map_plus": bounds.map_plus,
        "epsilon_used": bounds.epsilon_used,
        "expected_map": exp.expected_map,
        "expected_exact": exp.exact,
    }
    if baseline_reps > 0:
        base = random_baseline(instance.labels, instance.dim, baseline_reps, seed, instance.metric)
        report["baseline_mean"] = base.mean_map
        report["baseline_std"] = base.std_map
        report["baseline_repetitions"] = base.repetitions
    return report
