import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from shuffledp.audit import audit_mechanism, mechanism_distribution
from shuffledp.histograms import (
    ConstantMechanism,
    CountOracle,
    ExactHistogram,
    InjectedHistogram,
    LdpHistogram,
    LdpMechanism,
    RandomizedResponse,
    debias_factor,
    fwht,
    ldp_histogram,
    local_hash_keys,
    local_hash_sign,
    sample_keep,
    subsample_amplify,
    subsample_size,
    unrank_combination,
)
from shuffledp.model import Context
from shuffledp.randomness import enumerate_body

W = b"\x01" * 32


def test_likelihood_ratio_is_exactly_e_eps():
    for eps in (0.5, 1.0, 2.0):
        with mpmath.workdps(50):
            assert abs(LdpMechanism(eps).likelihood_ratio() - mpmath.e ** mpmath.mpf(eps)) < mpmath.mpf(10) ** -45
        # the realized 2^-64 grid mechanism never exceeds it
        assert LdpMechanism(eps).realized_ratio() <= Fraction(math.exp(eps)) * (1 + Fraction(1, 2**40))


def test_single_party_unbiased_in_closed_form():
    # E[D(x)] for n=1 is (2p-1) times the debias factor
    for eps in (0.5, 1.0, 3.0):
        p = LdpMechanism(eps).keep
        assert float(2 * p - 1) * debias_factor(eps) == pytest.approx(1.0, abs=1e-12)


def test_large_epsilon_counts_everyone():
    ys = np.full(50, 3)
    D = ldp_histogram(ys, 40.0, W, np.random.default_rng(0), 16)
    assert D.query(3) == pytest.approx(50)


def test_absent_value_has_zero_mean():
    n, runs = 200, 400
    vals = []
    for r in range(runs):
        w = r.to_bytes(4, "big")
        D = ldp_histogram(np.zeros(n, dtype=int), 1.0, w, np.random.default_rng(r), 8)
        vals.append(D.query(5))
    vals = np.array(vals)
    assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(runs)


def test_query_is_deterministic_and_paths_agree():
    ys = np.random.default_rng(1).integers(0, 100, size=300)
    D = ldp_histogram(ys, 1.0, W, np.random.default_rng(2), 100)
    assert D.query(7) == D.query(7)
    full = D.query_all()
    assert np.allclose(full, D.query_many(range(100)))
    assert np.isclose(full[42], D.query(42))
    y, best = D.argmax()
    assert best == full.max() and y == int(np.flatnonzero(full == full.max()).min())
    assert D.argmax([3, 42])[0] in (3, 42)
    with pytest.raises(ValueError):
        D.query(100)


def test_argmax_respects_full_range_cap():
    D = ldp_histogram([0, 1], 1.0, W, np.random.default_rng(0), 100, full_range_cap=10)
    with pytest.raises(ValueError):
        D.argmax()


def test_fwht_matches_direct_sum():
    v = np.random.default_rng(3).integers(-5, 5, size=16)
    direct = [sum(int(v[a]) * (-1) ** bin(a & y).count("1") for a in range(16)) for y in range(16)]
    assert list(fwht(v)) == direct


def test_hash_keys_are_public_and_deterministic():
    a1, b1 = local_hash_keys(W, 10, 4)
    a2, b2 = local_hash_keys(W, 10, 4)
    assert (a1 == a2).all() and (b1 == b2).all()
    assert set(np.unique(local_hash_sign(a1, b1, 5))) <= {-1, 1}


def test_sample_keep_rate():
    p = LdpMechanism(1.0).keep
    k = sample_keep(np.random.default_rng(0), p, 10**5)
    assert abs(k.mean() - float(p)) < 4 * math.sqrt(float(p * (1 - p)) / 10**5)


def test_party_body_matches_vectorized_law():
    plug = LdpHistogram(1.0)
    ctx = Context(0, 1, 0, W, 3, ())
    law = {}
    for p, _, msg in enumerate_body(lambda c: plug.party_body(c, 3, 1, 8), ctx):
        law[msg] = p
    assert sorted(law.values()) == sorted([plug.mech.keep, 1 - plug.mech.keep])


def test_count_oracle():
    o = CountOracle({2: 5.0, 7: 5.0, 1: 1.0}, 10)
    assert o.query(3) == 0.0
    assert o.argmax() == (2, 5.0)
    assert o.argmax([1, 3]) == (1, 1.0)
    assert CountOracle({}, 4).argmax() == (0, 0.0)
    assert CountOracle({0: -1.0}, 4).argmax() == (1, 0.0)


def test_exact_and_injected_plugins():
    msgs = [ExactHistogram().party_body(None, y, 3, 10) for y in (4, 4, 1)]
    msgs = [_finish(g) for g in msgs]
    assert ExactHistogram().oracle_from_messages(W, msgs, 3, 10).counts == {4: 2, 1: 1}
    assert InjectedHistogram.scaled(0.5).oracle_from_messages(W, msgs, 3, 10).query(4) == 1.0
    assert InjectedHistogram.fixed({9: 3.0}).oracle_vectorized(np.array([1]), W, None, 10).argmax() == (9, 3.0)


def _finish(gen):
    try:
        next(gen)
    except StopIteration as stop:
        return stop.value
    raise AssertionError("body drew randomness")


def test_subsample_size_formula():
    assert subsample_size(10, 0.5, 1.0) == math.ceil(20 * (3 + math.e)) == 115


def test_unrank_combination_is_lexicographic_bijection():
    from itertools import combinations
    assert [unrank_combination(r, 6, 3) for r in range(math.comb(6, 3))] == list(combinations(range(6), 3))


def test_amplified_input_ignoring_mechanism_is_exactly_private():
    mech = subsample_amplify(ConstantMechanism(1), 0.5, 1.0, t=4)
    for eps in (0.0, 0.5, 2.0):
        assert audit_mechanism(mech, [0, 1], eps).value == 0.0


def test_amplified_randomized_response_within_claimed_delta():
    eps_star = math.log(3)
    for t in (4, None):  # None: the formula population, 12
        mech = subsample_amplify(RandomizedResponse(eps_star, 1), 0.5, eps_star, 0.0, t=t)
        assert audit_mechanism(mech, [0, 1], 0.5).value <= mech.claimed_delta
    # t=3 is below what the claim needs: selection probability 1/3 gives ratio 5/3 > e^0.5
    small = subsample_amplify(RandomizedResponse(eps_star, 1), 0.5, eps_star, 0.0, t=3)
    assert audit_mechanism(small, [0, 1], 0.5).value > 0
    # the base mechanism alone is not 0.5-private
    assert audit_mechanism(RandomizedResponse(eps_star, 1), [0, 1], 0.5).value > 0


def test_subsample_validation():
    with pytest.raises(ValueError):
        subsample_amplify(RandomizedResponse(1.0, 2), 1.5, 1.0)
    with pytest.raises(ValueError):
        subsample_amplify(RandomizedResponse(1.0, 2), 0.5, 1.0, t=1)


def test_mechanism_distribution_sums_to_one():
    d = mechanism_distribution(RandomizedResponse(1.0, 2), (0, 1))
    assert sum(p for _, p in d.items()) == 1
