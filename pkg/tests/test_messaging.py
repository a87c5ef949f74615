import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shuffledp.encoding import decode_message
from shuffledp.messaging import (
    AdditionInner,
    KeyStatus,
    derive_key,
    key_bit_message,
    key_exchange,
    key_exchange_failure_probability,
    mpc_in_shuffle_spec,
    mpc_local_outputs,
    pad_message,
    pair_header,
    pairwise_channels_round,
    pairwise_channels_spec,
    smt_transmit,
    smt_view_distance,
    unpad_message,
)
from shuffledp.model import run_protocol, shuffle_round
from shuffledp.randomness import RandomStream

DATA = Path(__file__).parent / "data"


def _frac(s):
    a, b = s.split("/")
    return Fraction(int(a), int(b))


def test_key_exchange_trace():
    # a = (0,1,1), b = (1,1,0): disagreement at indices 1 and 3, key is a_1 = 0
    h = (0, 1, 0)
    a, b = (0, 1, 1), (1, 1, 0)
    out = shuffle_round([[key_bit_message(h, i + 1, v) for i, v in enumerate(a)],
                         [key_bit_message(h, i + 1, v) for i, v in enumerate(b)]])
    ka = derive_key(a, out, 0, 1, 1, True)
    kb = derive_key(b, out, 0, 1, 1, False)
    assert ka.status is KeyStatus.KEY and ka.key == (0,) and kb.key == (0,)


def test_key_exchange_fails_when_equal():
    h = (0, 1, 0)
    a = (1, 0, 1)
    out = shuffle_round([[key_bit_message(h, i + 1, v) for i, v in enumerate(a)]] * 2)
    assert derive_key(a, out, 0, 1, 1, True).status is KeyStatus.FAIL


def test_key_exchange_failure_k1():
    assert key_exchange_failure_probability(1) == Fraction(1, 8)


@given(st.integers(1, 12), st.integers(0, 2**32))
def test_key_exchange_endpoints_agree(k, seed):
    out, oi, oj = key_exchange(0, 1, k, RandomStream.from_seed(seed, "i"), RandomStream.from_seed(seed, "j"))
    assert oi.status is oj.status
    if oi.status is KeyStatus.KEY:
        assert oi.key == oj.key and len(oi.key) == k


def test_pad_round_trip():
    for M in [(), (0,), (1, 0, 1), (0, 0, 0)]:
        assert unpad_message(pad_message(M, 3)) == M
    with pytest.raises(ValueError):
        pad_message((1, 1), 1)
    with pytest.raises(ValueError):
        unpad_message(0)


@settings(max_examples=200)
@given(st.integers(1, 8), st.data())
def test_smt_recovers(k, data):
    M = tuple(data.draw(st.lists(st.integers(0, 1), max_size=k)))
    seed = data.draw(st.integers(0, 2**32))
    bundle, got = smt_transmit(0, 1, M, k, seed)
    assert got == M
    assert bundle.cipher ^ bundle.h(bundle.a) == pad_message(M, k)


def test_smt_k1_distance_matches_oracle():
    frozen = json.loads((DATA / "smt_k1.json").read_text())
    d = smt_view_distance((0,), (1,), 1)
    assert d == _frac(frozen["distance_delta_high"])
    assert d <= Fraction(3, 2)


def test_smt_distance_is_zero_for_equal_messages():
    assert smt_view_distance((1,), (1,), 1) == 0


def test_pairwise_channels_small():
    assert pairwise_channels_round({(0, 1): (1, 0, 1)}, 2, 3, seed=0)[(0, 1)] == (1, 0, 1)


@pytest.mark.slow
def test_pairwise_channels_random_matrix():
    rng = random.Random(0)
    n, k = 5, 3
    for trial in range(1000):
        payloads = {(i, j): tuple(rng.randint(0, 1) for _ in range(rng.randint(0, k)))
                    for i in range(n) for j in range(n) if i != j}
        got = pairwise_channels_round(payloads, n, k, seed=trial)
        assert got == payloads


def test_pair_shuffle_variant():
    payloads = {(0, 1): (1,), (1, 0): (0, 1), (2, 0): ()}
    got = pairwise_channels_round(payloads, 3, 2, seed=4, pair_shuffle=True)
    assert all(got[p] == m for p, m in payloads.items())


def test_ordered_pairs_use_disjoint_headers():
    assert pair_header(1, 2) != pair_header(2, 1)
    spec = pairwise_channels_spec(3, 1)
    t = run_protocol(spec, [{1: (1,)}, {2: (0,)}, {}], 0)
    headers = {decode_message(m)[1][:3] for m in t.channel_outputs[0]}
    assert (1, 2, 0) in headers and (1, 2, 1) in headers


def test_mpc_shell_addition():
    inner = AdditionInner(b=6)
    for seed in range(5):
        xs = [random.Random(seed).randrange(64) for _ in range(4)]
        spec = mpc_in_shuffle_spec(inner, 4)
        t = run_protocol(spec, xs, seed)
        assert mpc_local_outputs(spec, inner, t) == [sum(xs) % 64] * 4
    with pytest.raises(ValueError):
        mpc_in_shuffle_spec(inner, 3, k=2)
