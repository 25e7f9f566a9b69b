import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detmap.errors import EvaluationError
from detmap.ranking_metrics import (
    FAVORABLE,
    STABLE,
    UNFAVORABLE,
    RelevanceMatrix,
    TiePolicy,
    evaluate_map,
    relevance,
)
from detmap.tie_bounds import epsilon_select, map_bounds, perturbation

import oracles


def rel(values):
    v = np.atleast_2d(np.asarray(values, bool))
    return RelevanceMatrix(v, np.zeros_like(v))


class TestEpsilon:
    def test_single_row(self):
        assert epsilon_select([[0.1, 0.2, 0.2, 0.5]]) == pytest.approx(0.05, rel=1e-12)

    def test_constant(self):
        assert epsilon_select(np.zeros((3, 4))) == 1.0

    def test_min_over_rows(self):
        assert epsilon_select([[0.1, 0.4], [0.35, 0.36]]) == pytest.approx(0.005, rel=1e-9)

    def test_excluded_cells_ignored(self):
        d = np.array([[0.0, 1.0, 1.0]])
        assert epsilon_select(d, np.array([[True, False, False]])) == 1.0
        assert epsilon_select(d) == 0.5


class TestPerturbation:
    def test_formula(self):
        assert perturbation(rel([1, 0, 1]), 0.5).tolist() == [[0, 0.5, 0]]

    def test_all_relevant(self):
        assert not perturbation(rel([1, 1]), 0.3).any()

    @pytest.mark.parametrize("eps", [0.0, -1.0])
    def test_non_positive(self, eps):
        with pytest.raises(EvaluationError):
            perturbation(rel([1, 0]), eps)


class TestMapBounds:
    def test_no_ties(self):
        d = np.random.default_rng(0).random((5, 9))
        r = rel(np.random.default_rng(1).random((5, 9)) < 0.5)
        r.values[:, 0] = True
        b = map_bounds(d, r)
        assert b.map_minus == b.map_plus == evaluate_map(d, r)

    def test_two_tie_groups(self, two_tie_groups):
        d, r = two_tie_groups
        b = map_bounds(d, r)
        assert b.map_plus == pytest.approx(0.7, abs=1e-12)
        assert b.map_minus == pytest.approx((1 / 2 + 2 / 7) / 2, abs=1e-12)

    def test_match_extreme_policies(self, two_tie_groups):
        d, r = two_tie_groups
        b = map_bounds(d, r)
        assert b.map_plus == evaluate_map(d, r, FAVORABLE)
        assert b.map_minus == evaluate_map(d, r, UNFAVORABLE)

    def test_all_zero_exploit(self):
        labels = np.repeat(np.arange(10), 100)
        r = relevance(labels, labels, range(1000))
        b = map_bounds(np.zeros((1000, 1000)), r)
        assert b.map_plus == 1.0
        assert b.map_minus == pytest.approx(float(oracles.closed_form_map_minus(10, 100)), abs=1e-12)
        assert b.epsilon_used == 1.0

    def test_override_epsilon(self, two_tie_groups):
        d, r = two_tie_groups
        assert map_bounds(d, r, epsilon=0.25).epsilon_used == 0.25
        with pytest.raises(EvaluationError, match="gap"):
            map_bounds(d, r, epsilon=1.0)
        with pytest.raises(EvaluationError):
            map_bounds(d, r, epsilon=0.0)

    def test_one_ulp_gaps(self):
        # neighbours one ulp apart: no float fits between them, so D +- E cannot separate ties
        a = 1.0
        b = np.nextafter(a, 2.0)
        c = np.nextafter(b, 2.0)
        d = np.array([[a, b, b, c]])
        r = rel([0, 1, 0, 1])
        bounds = map_bounds(d, r)
        assert bounds.map_minus <= evaluate_map(d, r) <= bounds.map_plus
        assert bounds.map_plus == evaluate_map(d, r, FAVORABLE)
        assert bounds.map_minus == evaluate_map(d, r, UNFAVORABLE)


def quantized_instance(rng, q, k):
    d = np.round(rng.random((q, k)), 1)
    v = rng.random((q, k)) < 0.3
    v[np.arange(q), rng.integers(k, size=q)] = True
    return d, RelevanceMatrix(v, np.zeros_like(v))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 20))
def test_sandwich(seed, q, k):
    rng = np.random.default_rng(seed)
    d, r = quantized_instance(rng, q, k)
    b = map_bounds(d, r)
    for policy in (STABLE, FAVORABLE, UNFAVORABLE, TiePolicy("shuffle", seed)):
        assert b.map_minus <= evaluate_map(d, r, policy) <= b.map_plus


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(2, 15))
def test_strict_order_preserved(seed, q, k):
    rng = np.random.default_rng(seed)
    d, r = quantized_instance(rng, q, k)
    eps = epsilon_select(d)
    e = perturbation(r, eps)
    for shifted in (d + e, d - e):
        for row, srow in zip(d, shifted):
            lt = row[:, None] < row[None, :]
            assert np.all((srow[:, None] < srow[None, :])[lt])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 15))
def test_equal_iff_no_mixed_tie(seed, q, k):
    rng = np.random.default_rng(seed)
    d, r = quantized_instance(rng, q, k)
    b = map_bounds(d, r)
    mixed = False
    for row, rr in zip(d, r.values):
        for v in np.unique(row):
            grp = rr[row == v]
            mixed |= bool(grp.any() and not grp.all())
    assert (b.map_minus == b.map_plus) == (not mixed)


def test_permutation_invariance():
    rng = np.random.default_rng(12)
    d, r = quantized_instance(rng, 30, 40)
    base = map_bounds(d, r)
    for _ in range(10):
        pq, pk = rng.permutation(30), rng.permutation(40)
        r2 = RelevanceMatrix(r.values[pq][:, pk], r.excluded[pq][:, pk])
        assert map_bounds(d[pq][:, pk], r2) == base
