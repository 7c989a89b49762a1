import threading
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingms.classifier import (
    DecisionCache, SparsityPrior, confidence, decide, decision_table, physical, posterior_gap, threshold,
)
from isingms.evidence import Moments, PairStats


def test_physical_examples():
    assert physical((0, 0, 0))
    assert not physical((1, -1, 0.5))
    assert physical(PairStats(25, 0, 0, 25))
    counts = np.random.default_rng(0).integers(0, 30, size=(500, 4))
    for row in counts[counts.sum(axis=1) > 0]:
        s = PairStats(*row.tolist())
        assert physical((s.m1, s.m2, s.c12), tol=1e-12)


def test_confidence_examples():
    assert confidence(Moments(0, 0, 0, 50)) < 0
    assert confidence(Moments(0, 0, 0.9, 500)) > 0
    assert confidence(Moments(0.5, 0.5, 0.25, 500)) < 0
    with pytest.raises(ValueError):
        confidence(Moments(1, -1, 0.5, 50))


def test_confidence_bounded_over_table():
    table = decision_table(30)
    assert len(table["eta"]) == comb(33, 3)
    assert np.all(np.abs(table["eta"]) <= 1)
    assert np.all(np.isfinite(table["eta"]))


def test_large_sample_size_no_overflow():
    assert confidence(Moments(0.1, 0.0, 0.5, 10**7)) == 1.0
    assert -1 <= confidence(Moments(0.1, 0.2, 0.02, 10**7)) < 0


def test_posterior_gap_sign():
    s = Moments(0.1, -0.2, 0.3, 80)
    eta = confidence(s)
    for eps in (0.0, 0.01, 0.1, 1.0, 10.0, np.inf):
        gap = posterior_gap(s, eps)
        assert np.sign(gap) == np.sign(eta - threshold(eps)) or gap == 0
    assert posterior_gap(s, 1.0) == pytest.approx(eta, abs=1e-15)
    assert posterior_gap(s, 0.0) == -1.0


def test_threshold_examples():
    assert threshold(1.0) == 0.0
    assert threshold(0.1) == pytest.approx(0.9 / 1.1)
    assert threshold(np.inf) == -1.0
    assert threshold(1e12) == pytest.approx(-1.0)
    assert SparsityPrior(0.1).threshold == threshold(0.1)
    with pytest.raises(ValueError):
        SparsityPrior(-0.5)


def test_decide_examples():
    assert decide(0.0, 1.0)
    assert decide(0.1, 1.0)
    assert not decide(0.5, 0.1)
    assert not decide(0.9, 0.01)
    for eps in (1e-6, 0.3, 1.0, 50.0):
        assert decide(1.0, eps)
    assert not decide(0.9999, 0.0)
    assert not decide(1.0, 0.0)
    assert decide(-0.5, np.inf)


@given(st.floats(-1, 1), st.floats(0, 1e6), st.floats(0, 1e6))
def test_decide_monotone_in_epsilon(eta, e1, e2):
    lo, hi = sorted((e1, e2))
    if decide(eta, lo):
        assert decide(eta, hi)


@given(st.floats(-1, 1))
def test_flat_prior_is_sign_rule(eta):
    assert bool(decide(eta, 1.0)) == (eta >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40), st.integers(0, 40))
def test_symmetries(a, b, c, d):
    if a + b + c + d == 0:
        return
    base = confidence(PairStats(a, b, c, d))
    assert abs(confidence(PairStats(a, c, b, d)) - base) <= 1e-12
    assert abs(confidence(PairStats(d, c, b, a)) - base) <= 1e-12


def test_cache_examples():
    cache = DecisionCache(50)
    first = cache.confidence((25, 0, 0, 25))
    assert cache.confidence((25, 0, 0, 25)) == first
    assert first == confidence(Moments(0, 0, 1, 50))
    assert (25, 0, 0) in cache
    with pytest.raises(ValueError):
        cache.confidence((25, 0, 0, 20))


def test_cache_bit_identical_to_fresh():
    cache = DecisionCache(60)
    rng = np.random.default_rng(3)
    q = rng.multinomial(60, [0.25] * 4, size=200)
    batch = cache.log_odds_batch(q[:, 0], q[:, 1], q[:, 2])
    fresh = [DecisionCache(60).log_odds(tuple(r)) for r in q]
    np.testing.assert_array_equal(batch, fresh)
    again = cache.log_odds_batch(q[:, 0], q[:, 1], q[:, 2])
    np.testing.assert_array_equal(again, batch)


def test_precomputed_table_matches():
    cache = DecisionCache(20).precompute()
    assert len(cache) == comb(23, 3)
    table = decision_table(20)
    for row in range(0, len(table["eta"]), 37):
        key = (table["n_pp"][row], table["n_pm"][row], table["n_mp"][row], table["n_mm"][row])
        assert cache.confidence(key) == table["eta"][row]


def test_cache_concurrent_inserts():
    cache = DecisionCache(40)
    keys = [(a, b, 40 - a - b - 3, 3) for a in range(0, 30, 3) for b in range(0, 8)]
    results = {}

    def work(offset):
        results[offset] = [cache.confidence(k) for k in keys[offset:] + keys[:offset]]

    threads = [threading.Thread(target=work, args=(o,)) for o in (0, 7, 19)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    serial = [DecisionCache(40).confidence(k) for k in keys]
    for offset, values in results.items():
        assert values == serial[offset:] + serial[:offset]
