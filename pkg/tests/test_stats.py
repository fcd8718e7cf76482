import math
from collections import Counter

import pytest
from hypothesis import assume, given, settings, strategies as st

from h2size.stats import UndefinedCorrelationError, ecdf, ecdf_at, pearson, quantile, tukey_summary

from oracles import pearson_oracle, tukey_oracle


def test_pearson_identity_and_negation():
    x = [1.0, 2.0, 4.0, 8.0]
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)


def test_pearson_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        pearson([1], [2])


def test_pearson_length_mismatch():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=50))
def test_pearson_matches_two_pass_formula(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    mx, my = sum(x) / len(x), sum(y) / len(y)
    assume(sum((a - mx) ** 2 for a in x) > 1e-3 and sum((b - my) ** 2 for b in y) > 1e-3)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson_oracle(x, y), abs=1e-12)


def test_ecdf_steps():
    assert ecdf([3, 1, 1, 2]) == [(1, 0.5), (2, 0.75), (3, 1.0)]
    assert ecdf(Counter({5: 3, 1: 1})) == [(1, 0.25), (5, 1.0)]
    assert ecdf([]) == []
    pts = ecdf([1, 2, 3, 4])
    assert ecdf_at(pts, 0) == 0.0
    assert ecdf_at(pts, 2.5) == 0.5
    assert ecdf_at(pts, 9) == 1.0


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=60))
def test_ecdf_is_monotone_and_ends_at_one(values):
    pts = ecdf(values)
    probs = [p for _, p in pts]
    assert probs == sorted(probs)
    assert probs[-1] == 1.0
    assert len(pts) == len(set(values))


def test_quantile_inverse_cdf():
    v = [5, 1, 4, 2, 3]
    assert quantile(v, 0.5) == 3
    assert quantile(v, 0.9) == 5
    assert quantile(v, 0.2) == 1
    with pytest.raises(ValueError):
        quantile([], 0.5)


@given(st.lists(st.integers(-100, 100), min_size=1, max_size=50),
       st.floats(0.01, 1.0))
def test_quantile_matches_brute_force(values, q):
    got = quantile(values, q)
    n = len(values)
    expected = min(v for v in values if sum(1 for w in values if w <= v) >= q * n - 1e-12)
    assert got == expected


def test_tukey_known_values():
    assert tukey_summary([1, 2, 3, 4, 5, 6, 7]) == {"min": 1, "q1": 2, "median": 4, "q3": 6, "max": 7}
    assert tukey_summary([1, 2, 3, 4]) == {"min": 1, "q1": 1.5, "median": 2.5, "q3": 3.5, "max": 4}


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=80))
def test_tukey_matches_oracle(values):
    s = tukey_summary(values)
    assert (s["min"], s["q1"], s["median"], s["q3"], s["max"]) == tukey_oracle(values)
