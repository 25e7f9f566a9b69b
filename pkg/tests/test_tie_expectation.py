import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detmap.ranking_metrics import STABLE, RelevanceMatrix, TiePolicy, evaluate_map, relevance
from detmap.tie_bounds import map_bounds
from detmap.tie_expectation import (
    EquidistantRun,
    expected_map,
    extract_runs,
    run_expected_contribution,
    run_precision_bounds,
)

import oracles


def brute_run(n, k, l, m):  # noqa: E741
    """Exact expectation by enumerating which run positions hold relevant items."""
    total = Fraction(0)
    count = 0
    for pos in itertools.combinations(range(1, l + 1), m):
        total += sum(Fraction(n + j, k + p) for j, p in enumerate(pos, start=1))
        count += 1
    return total / count


def run(n, k, l, m):  # noqa: E741
    return EquidistantRun(0, k, n, l, m, 0.0)


class TestExtractRuns:
    def test_hand_grouping(self):
        runs = extract_runs([0.1, 0.1, 0.3], [1, 0, 1])
        assert [(r.k, r.n, r.l, r.m) for r in runs] == [(0, 0, 2, 1), (2, 1, 1, 1)]
        assert runs[0].mixed and not runs[1].mixed

    def test_distinct(self):
        runs = extract_runs([0.3, 0.1, 0.2, 0.5], [1, 0, 0, 1])
        assert all(r.l == 1 for r in runs)
        assert [r.distance_value for r in runs] == [0.1, 0.2, 0.3, 0.5]

    def test_two_tie_groups(self, two_tie_groups):
        d, r = two_tie_groups
        runs = extract_runs(d[0], r.values[0])
        mixed = [(x.k, x.n, x.l, x.m) for x in runs if x.mixed]
        assert mixed == [(0, 0, 2, 1), (4, 1, 3, 1)]
        assert sum(x.l for x in runs) == 100
        assert len(runs) == 100 - 1 - 2

    def test_unsorted_input(self):
        runs = extract_runs([0.3, 0.1, 0.1], [1, 1, 0])
        assert [(r.k, r.n, r.l, r.m) for r in runs] == [(0, 0, 2, 1), (2, 1, 1, 1)]


class TestRunContribution:
    def test_two_placements(self):
        assert run_expected_contribution(run(0, 0, 2, 1)).value == pytest.approx(0.75, abs=1e-15)

    def test_three_placements(self):
        res = run_expected_contribution(run(1, 4, 3, 1))
        assert res.exact
        assert res.value == pytest.approx((2 / 5 + 2 / 6 + 2 / 7) / 3, abs=1e-15)
        assert res.value == pytest.approx(0.339683, abs=1e-6)

    def test_all_relevant(self):
        assert run_expected_contribution(run(0, 0, 2, 2)).value == 2.0

    @pytest.mark.parametrize("n,k,l,m", [(0, 0, 5, 2), (3, 7, 6, 3), (2, 2, 9, 4), (0, 10, 8, 1)])
    def test_matches_brute_force(self, n, k, l, m):  # noqa: E741
        res = run_expected_contribution(run(n, k, l, m))
        assert res.exact
        assert res.value == pytest.approx(float(brute_run(n, k, l, m)), abs=1e-13)

    def test_monte_carlo_flagged_and_converges(self):
        n, k, l, m = 2, 5, 16, 6  # noqa: E741
        exact = float(brute_run(n, k, l, m))
        lo, hi = run_precision_bounds(run(n, k, l, m))
        spread = m * (hi - lo)
        errors = []
        for samples in (100, 10_000, 1_000_000):
            res = run_expected_contribution(run(n, k, l, m), budget=0, seed=3, samples=samples)
            assert not res.exact and res.samples_used == samples
            err = abs(res.value - exact)
            # standard deviation of one draw is at most spread / 2
            assert err <= 5 * spread / 2 / math.sqrt(samples)
            errors.append(err)
        assert errors[-1] < 1e-3

    def test_monte_carlo_reproducible(self):
        a = run_expected_contribution(run(0, 0, 40, 10), budget=0, seed=1, samples=500)
        b = run_expected_contribution(run(0, 0, 40, 10), budget=0, seed=1, samples=500)
        c = run_expected_contribution(run(0, 0, 40, 10), budget=0, seed=2, samples=500)
        assert a == b and a.value != c.value


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(1, 10), st.data())
def test_precisions_inside_run_bounds(n, extra, l, data):  # noqa: E741
    m = data.draw(st.integers(1, l))
    k = n + extra
    r = run(n, k, l, m)
    lo, hi = run_precision_bounds(r)
    for pos in itertools.combinations(range(1, l + 1), m):
        for j, p in enumerate(pos, start=1):
            assert lo <= (n + j) / (k + p) <= hi


class TestExpectedMap:
    def test_two_tie_groups(self, two_tie_groups):
        d, r = two_tie_groups
        res = expected_map(d, r)
        expected = (0.75 + (2 / 5 + 2 / 6 + 2 / 7) / 3) / 2
        assert res.exact
        assert res.expected_map == pytest.approx(expected, abs=1e-12)
        assert res.expected_map == pytest.approx(0.544841, abs=1e-6)
        b = map_bounds(d, r)
        assert b.map_minus < res.expected_map < b.map_plus

    def test_no_mixed_runs_equals_map(self):
        rng = np.random.default_rng(2)
        d = rng.random((10, 20))
        v = rng.random((10, 20)) < 0.3
        v[:, 0] = True
        # pure ties: duplicate distances only among relevant items
        d[:, 1] = d[:, 0]
        v[:, 1] = True
        r = RelevanceMatrix(v, np.zeros_like(v))
        res = expected_map(d, r)
        b = map_bounds(d, r)
        assert res.expected_map == evaluate_map(d, r) == b.map_minus == b.map_plus

    def test_pure_run_neutrality(self):
        d = np.array([[0.1, 0.1, 0.2, 0.3, 0.3, 0.4]])
        v = np.array([[1, 0, 1, 0, 0, 1]], bool)
        base_exp = expected_map(d, RelevanceMatrix(v, np.zeros_like(v))).expected_map
        policies = [STABLE, TiePolicy("favorable"), TiePolicy("unfavorable"), TiePolicy("shuffle", 1)]
        base_maps = [evaluate_map(d, RelevanceMatrix(v, np.zeros_like(v)), p) for p in policies]

        # an all-irrelevant run past the last relevant item: no change anywhere
        d2 = np.hstack([d, [[0.9, 0.9]]])
        v2 = np.hstack([v, [[False, False]]])
        r2 = RelevanceMatrix(v2, np.zeros_like(v2))
        assert expected_map(d2, r2).expected_map == base_exp
        assert [evaluate_map(d2, r2, p) for p in policies] == base_maps

        # a pure run inserted in front: the expectation still equals brute force
        d3 = np.hstack([[[0.0, 0.0]], d])
        v3 = np.hstack([[[True, True]], v])
        r3 = RelevanceMatrix(v3, np.zeros_like(v3))
        _, _, mean, _ = oracles.row_stats(d3[0].tolist(), v3[0].tolist())
        assert expected_map(d3, r3).expected_map == pytest.approx(float(mean), abs=1e-12)

    def test_pure_runs_only_track_map(self):
        # without mixed runs, adding pure runs moves expectation and mAP identically
        d = np.array([[0.1, 0.2, 0.3, 0.4]])
        v = np.array([[1, 0, 1, 0]], bool)
        for extra_d, extra_v in (([0.05, 0.05], [True, True]), ([0.25, 0.25], [False, False]),
                                 ([0.35, 0.35, 0.35], [True, True, True])):
            d2 = np.hstack([d, [extra_d]])
            v2 = np.hstack([v, [extra_v]])
            r2 = RelevanceMatrix(v2, np.zeros_like(v2))
            for p in (STABLE, TiePolicy("unfavorable"), TiePolicy("shuffle", 4)):
                assert expected_map(d2, r2).expected_map == evaluate_map(d2, r2, p)

    def test_leave_one_out_exclusion(self):
        labels = ["a", "b", "a", "b"]
        r = relevance(labels, labels, range(4))
        res = expected_map(np.zeros((4, 4)), r)
        # each query: 3 candidates, 1 relevant, uniformly placed -> (1 + 1/2 + 1/3) / 3
        assert res.expected_map == pytest.approx(11 / 18, abs=1e-15)
        assert res.exact

    def test_sampling_path_inside_bounds(self):
        labels = np.repeat(np.arange(4), 30)
        r = relevance(labels, labels, range(120))
        d = np.zeros((120, 120))
        res = expected_map(d, r, budget=10, samples=2000, seed=5)
        b = map_bounds(d, r)
        assert not res.exact and res.samples_used == 120 * 2000
        assert b.map_minus <= res.expected_map <= b.map_plus

    def test_permutation_invariant_even_when_sampled(self):
        rng = np.random.default_rng(3)
        d = np.round(rng.random((12, 40)), 1)
        v = rng.random((12, 40)) < 0.3
        v[:, 0] = True
        r = RelevanceMatrix(v, np.zeros_like(v))
        base = expected_map(d, r, budget=5, samples=300, seed=9)
        pq, pk = rng.permutation(12), rng.permutation(40)
        r2 = RelevanceMatrix(v[pq][:, pk], r.excluded[pq][:, pk])
        assert expected_map(d[pq][:, pk], r2, budget=5, samples=300, seed=9).expected_map \
            == base.expected_map


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 8))
def test_oracle_equivalence_small(seed, q, k):
    rng = np.random.default_rng(seed)
    d = rng.integers(0, 3, size=(q, k)).astype(float)
    v = rng.random((q, k)) < 0.5
    v[np.arange(q), rng.integers(k, size=q)] = True
    r = RelevanceMatrix(v, np.zeros_like(v))
    stats = [oracles.row_stats(d[i].tolist(), v[i].tolist()) for i in range(q)]
    res = expected_map(d, r)
    b = map_bounds(d, r)
    assert res.expected_map == pytest.approx(float(sum(s[2] for s in stats) / q), abs=1e-12)
    assert b.map_minus == oracles.mean_float([s[0] for s in stats])
    assert b.map_plus == oracles.mean_float([s[1] for s in stats])
    assert b.map_minus <= res.expected_map <= b.map_plus
    assert b.map_minus <= evaluate_map(d, r, STABLE) <= b.map_plus
