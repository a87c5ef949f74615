import itertools
import math
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shuffledp.model import run_protocol
from shuffledp.primitives import (
    AffineHash,
    GroupVector,
    ToeplitzHash,
    ZqElement,
    group_branches,
    hash_prime,
    ikos_split,
    ikos_sum_protocol,
    ikos_sum_spec,
    perfectly_hashes,
    sample_pairwise_hash,
    sample_uniform_group,
    share_count,
    smallest_prime_at_least,
    split_body,
)
from shuffledp.randomness import RandomStream, enumerate_body


def test_group_arithmetic():
    a, b = ZqElement(4, 7), ZqElement(5, 7)
    assert (a + b).value == 2 and (a - b).value == 6 and (-a).value == 3
    with pytest.raises(ValueError):
        a + ZqElement(1, 5)
    with pytest.raises(ValueError):
        ZqElement(7, 7)
    v = GroupVector.of([1, 9], 5) + GroupVector.of([4, 1], 5)
    assert v.entries == (0, 0) and len(v) == 2 and v[1] == ZqElement(0, 5)


def test_group_branches_q2():
    assert [(p, e.value) for p, e in group_branches(2)] == [(Fraction(1, 2), 0), (Fraction(1, 2), 1)]
    assert sum(p for p, _ in group_branches(13)) == 1


def test_sample_uniform_group_frequencies():
    s = RandomStream.from_seed(2)
    N = 10**5
    c = Counter(sample_uniform_group(5, s).value for _ in range(N))
    sd = math.sqrt(N * 0.2 * 0.8)
    assert all(abs(c[v] - N / 5) < 4 * sd for v in range(5))


def test_primes():
    assert smallest_prime_at_least(2) == 2
    assert smallest_prime_at_least(14) == 17
    assert smallest_prime_at_least(131) == 131
    assert hash_prime(10, 10) > 10 << 40


def test_hash_is_deterministic_and_checks_domain():
    h = sample_pairwise_hash(1000, 10**6, RandomStream.from_seed(0))
    assert h(17) == h(17) and 0 <= h(17) < 10**6
    with pytest.raises(ValueError):
        h(1000)
    assert isinstance(h, AffineHash) and set(h.describe()) == {"p", "a", "b", "R", "domain"}


def test_perfect_hashing_rate():
    # fraction of hashes perfectly hashing a 30-set, against 1 - |A|^2/R minus a 4-sigma slack
    s = RandomStream.from_seed(1)
    A = list(range(0, 1000, 33))[:30]
    trials = 20000
    ok = sum(perfectly_hashes(sample_pairwise_hash(1000, 10**6, s), A) for _ in range(trials))
    bound = 1 - len(A) ** 2 / 10**6
    slack = 4 * math.sqrt(bound * (1 - bound) / trials) + 1e-4
    assert ok / trials >= bound - slack


def test_pairwise_collision_rate():
    s = RandomStream.from_seed(7)
    R, N = 1000, 10**6
    p = hash_prime(1000, R)
    x, y = 3, 911
    hits = 0
    for _ in range(N):
        a, b = s.randbelow(p), s.randbelow(p)
        hits += ((a * x + b) % p) % R == ((a * y + b) % p) % R
    sd = math.sqrt(N / R * (1 - 1 / R))
    assert abs(hits - N / R) < 4 * sd


def test_toeplitz_bits_round_trip_and_linearity():
    s = RandomStream.from_seed(3)
    for _ in range(50):
        h = ToeplitzHash.sample(7, 2, s)
        assert ToeplitzHash.from_bits(7, 2, h.bits()) == h
        a, b = s.bits(7), s.bits(7)
        assert h(a) ^ h(b) ^ h(0) == h(a ^ b)


def test_toeplitz_constant_diagonals():
    h = ToeplitzHash(5, 3, 0b1011001, 0)
    entry = lambda r, c: (h.row(r) >> c) & 1  # noqa: E731
    for r in range(1, 3):
        for c in range(1, 5):
            assert entry(r, c) == entry(r - 1, c - 1)


def test_share_count():
    assert share_count(2**16, 100, 40) == 40 + 16 + 7


def test_split_single_share_is_input():
    assert enumerate_body(lambda _: split_body(4, 1, 7), None)[0][2] == (4,)


@given(st.integers(2, 50), st.integers(1, 6), st.integers(0, 2**32))
def test_split_reconstructs(q, ell, seed):
    x = ZqElement(seed % q, q)
    shares = ikos_split(x, ell, RandomStream.from_seed(seed))
    assert len(shares) == ell and sum(s.value for s in shares) % q == x.value


def test_first_share_uniform_q3():
    law = Counter()
    for p, _, shares in enumerate_body(lambda _: split_body(2, 2, 3), None):
        law[shares[0]] += p
    assert dict(law) == {0: Fraction(1, 3), 1: Fraction(1, 3), 2: Fraction(1, 3)}


def test_ikos_single_party():
    total, _ = ikos_sum_protocol([ZqElement(5, 11)], seed=1)
    assert total == ZqElement(5, 11)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(2, 40), st.integers(1, 3), st.integers(0, 60), st.integers(0, 2**32))
def test_ikos_exact_sum(n, q, d, sigma, seed):
    rng = RandomStream.from_seed(seed)
    vecs = [tuple(rng.randbelow(q) for _ in range(d)) for _ in range(n)]
    spec = ikos_sum_spec(n, q, d, sigma=sigma)
    expect = tuple(sum(v[c] for v in vecs) % q for c in range(d))
    assert run_protocol(spec, vecs, seed).outcome == expect
    assert run_protocol(ikos_sum_spec(n, q, d, mode="ideal"), vecs, seed).outcome == expect


def test_ikos_vector_wrapper():
    vs = [GroupVector.of([1, 2], 5), GroupVector.of([4, 4], 5)]
    total, spec = ikos_sum_protocol(vs, sigma=3, seed=0)
    assert total == GroupVector.of([0, 1], 5) and spec.params["ell"] == 3 + 3 + 1
    with pytest.raises(ValueError):
        ikos_sum_protocol([ZqElement(1, 5), ZqElement(1, 7)])


def test_ikos_shares_have_the_expected_layout():
    spec = ikos_sum_spec(2, 3, 1, ell=2)
    t = run_protocol(spec, [(1,), (2,)], 0)
    assert len(t.channel_outputs[0]) == 4
    assert list(t.channel_outputs[0]) == sorted(t.channel_outputs[0])


def test_equal_sum_inputs_q2_brute_force():
    # every share vector of n=2, q=2, l=2 enumerated by hand: the multisets agree exactly
    def law(xs):
        c = Counter()
        for s in itertools.product(range(2), repeat=2):
            c[tuple(sorted([s[0], (xs[0] - s[0]) % 2, s[1], (xs[1] - s[1]) % 2]))] += 1
        return c

    assert law((0, 1)) == law((1, 0))
