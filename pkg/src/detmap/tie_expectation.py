"""Expected mAP when every group of equidistant items is ordered uniformly at random.

A query row splits into maximal runs of bitwise-equal distances. A run is
described by

* ``k``: items ranked strictly before it,
* ``n``: relevant items among those ``k``,
* ``l``: run length,
* ``m``: relevant items inside the run.

Only mixed runs (``0 < m < l``) are ambiguous. ``n`` and ``k`` of a run do not
depend on how other runs are ordered, so by linearity of expectation each run's
expected precision sum can be computed on its own and then added up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EvaluationError
from .ranking_metrics import STABLE, RelevanceMatrix, mean_of, rank_correct

DEFAULT_BUDGET = 10**6
DEFAULT_SAMPLES = 10**5


@dataclass(frozen=True)
class EquidistantRun:
    query_index: int
    k: int
    n: int
    l: int  # noqa: E741
    m: int
    distance_value: float

    @property
    def mixed(self) -> bool:
        return 0 < self.m < self.l


@dataclass(frozen=True)
class RunExpectation:
    value: float
    exact: bool
    samples_used: int


@dataclass(frozen=True)
class ExpectationResult:
    expected_map: float
    exact: bool
    samples_used: int
    per_query: np.ndarray


def extract_runs(d_row, r_row, query_index: int = 0) -> list[EquidistantRun]:
    """Group one row into maximal runs of exactly equal distance, in ascending order."""
    d = np.asarray(d_row, dtype=np.float64)
    r = np.asarray(r_row).astype(bool)
    if d.shape != r.shape:
        raise EvaluationError(f"row shape mismatch: {d.shape} vs {r.shape}")
    idx = np.argsort(d, kind="stable")
    d, r = d[idx], r[idx]
    runs = []
    k = n = 0
    start = 0
    for i in range(1, len(d) + 1):
        if i == len(d) or d[i] != d[start]:
            l = i - start  # noqa: E741
            m = int(r[start:i].sum())
            runs.append(EquidistantRun(query_index, k, n, l, m, float(d[start])))
            k += l
            n += m
            start = i
    return runs


def run_precision_bounds(run: EquidistantRun) -> tuple[float, float]:
    """Lower and upper bound of any precision value realised inside ``run``."""
    before = run.k + run.l - run.m  # non-relevant run items all placed first
    lower = run.n / before if before else 0.0
    upper = (run.n + run.m) / (run.k + run.m) if run.k + run.m else 1.0
    return lower, upper


def _enumerate(n, k, l, m) -> float:  # noqa: E741
    j = np.arange(1, m + 1, dtype=np.float64)
    combos = itertools.combinations(range(1, l + 1), m)
    sums = []
    while True:
        chunk = list(itertools.islice(combos, 65536))
        if not chunk:
            break
        pos = np.array(chunk, dtype=np.float64)
        sums.append(((n + j) / (k + pos)).sum(axis=1))
    # mean over all C(l, m) placements, correctly rounded
    allsums = np.concatenate(sums)
    return math.fsum(allsums) / len(allsums)


def _sample(n, k, l, m, samples, seed) -> float:  # noqa: E741
    # seed depends only on the run's shape, so identical runs get identical
    # estimates wherever they occur (query/database order does not matter)
    rng = np.random.default_rng([seed, n, k, l, m])
    j = np.arange(1, m + 1, dtype=np.float64)
    chunk = max(1, min(samples, 2_000_000 // max(l, 1)))
    sums = []
    left = samples
    while left > 0:
        s = min(chunk, left)
        keys = rng.random((s, l))
        pos = np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m], axis=1) + 1.0
        sums.append(((n + j) / (k + pos)).sum(axis=1))
        left -= s
    allsums = np.concatenate(sums)
    return math.fsum(allsums) / len(allsums)


@lru_cache(maxsize=4096)
def _contribution(n, k, l, m, budget, samples, seed) -> RunExpectation:  # noqa: E741
    if m == 0:
        return RunExpectation(0.0, True, 0)
    if m == l:
        return RunExpectation(math.fsum((n + j) / (k + j) for j in range(1, m + 1)), True, 0)
    if math.comb(l, m) <= budget:
        return RunExpectation(_enumerate(n, k, l, m), True, 0)
    return RunExpectation(_sample(n, k, l, m, samples, seed), False, samples)


def run_expected_contribution(run: EquidistantRun, budget: int = DEFAULT_BUDGET, seed: int = 0,
                              samples: int = DEFAULT_SAMPLES) -> RunExpectation:
    """Expected sum of precision-at-relevant-rank over the relevant items of ``run``.

    Positions inside the run are uniformly random. When the run has at most
    ``budget`` placements C(l, m) they are all enumerated; otherwise ``samples``
    placements are drawn from a generator seeded by ``seed`` and the run's
    shape, and the result is flagged as not exact.
    """
    if samples < 1:
        raise EvaluationError("samples must be at least 1")
    return _contribution(run.n, run.k, run.l, run.m, int(budget), int(samples), int(seed))


def _mixed_runs_of_row(d_sorted, r_sorted):
    # yields (n, k, l, m) of every mixed run in an already sorted row
    boundary = np.empty(len(d_sorted), dtype=bool)
    boundary[0] = True
    boundary[1:] = d_sorted[1:] != d_sorted[:-1]
    starts = np.flatnonzero(boundary)
    lengths = np.diff(np.append(starts, len(d_sorted)))
    rel = np.add.reduceat(r_sorted.astype(np.int64), starts)
    before = np.concatenate(([0], np.cumsum(rel)[:-1]))
    mixed = (rel > 0) & (rel < lengths)
    return starts[mixed], before[mixed], lengths[mixed], rel[mixed]


def expected_map(D, R: RelevanceMatrix, budget: int = DEFAULT_BUDGET, seed: int = 0,
                 samples: int = DEFAULT_SAMPLES) -> ExpectationResult:
    """Expected mAP over uniformly random orderings inside every tie group."""
    D = np.asarray(D, dtype=np.float64)
    C = rank_correct(D, R, STABLE)
    exact = True
    used = 0
    per_query = np.empty(D.shape[0])
    for q in range(D.shape[0]):
        L = int(C.lengths[q])
        order = C.order[q, :L]
        d = D[q, order]
        c = C.values[q, :L].astype(bool)
        ranks = np.arange(1, L + 1)
        prec = np.cumsum(c) / ranks
        starts, ns, ls, ms = _mixed_runs_of_row(d, c)

        in_mixed = np.zeros(L, dtype=bool)
        terms = []
        for s, n, l, m in zip(starts, ns, ls, ms):  # noqa: E741
            in_mixed[s:s + l] = True
            res = _contribution(int(n), int(s), int(l), int(m), int(budget), int(samples), int(seed))
            terms.append(res.value)
            exact &= res.exact
            used += res.samples_used
        # outside mixed runs the ranking is unambiguous: take precisions as they are
        terms.extend(prec[c & ~in_mixed])
        per_query[q] = math.fsum(terms) / int(c.sum())
    return ExpectationResult(mean_of(per_query), exact, used, per_query)
