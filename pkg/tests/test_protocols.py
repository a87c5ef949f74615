import warnings

import numpy as np
import pytest

from shuffledp.audit import chi_squared_homogeneity
from shuffledp.histograms import InjectedHistogram, LdpHistogram
from shuffledp.model import Context, run_protocol
from shuffledp.protocols import (
    ElementOutcome,
    FixedOutcome,
    HeavyHitterSub,
    NestedInput,
    Status,
    TwoRoundSub,
    classify_failure,
    classify_nested_failure,
    common_prelude,
    common_prelude_spec,
    common_two_round,
    common_two_round_spec,
    nested_one_round,
    nested_one_round_spec,
    nested_trials,
    nested_two_round,
    prelude_trials,
    two_round_vectorized,
)
from shuffledp.protocols.nested import nested_vector_body, zero_cell
from shuffledp.protocols.prelude import failure_bounds, prelude_vector_body, unique_zero
from shuffledp.randomness import replay_body


def test_outcome_invariants():
    with pytest.raises(ValueError):
        ElementOutcome(Status.FOUND)
    with pytest.raises(ValueError):
        ElementOutcome(Status.FAIL, 3)
    assert ElementOutcome.found(2).judged(3).status is Status.FAIL
    assert ElementOutcome.found(2).judged(2) == ElementOutcome.found(2)


# ---------------------------------------------------------------------------
# CommonPrelude


def test_prelude_construction_identity():
    # participate, nonzero uniform draws off the input coordinate, no noise
    body = prelude_vector_body(4, 17, 10)
    ctx = Context(0, 10, 0, b"", 2, ())
    z = replay_body(body, ctx, (1, 5, 6, 7, 0))
    assert z == [5, 6, 0, 7] and unique_zero(z) == 2
    assert replay_body(body, ctx, (0,)) == [0, 0, 0, 0]


def test_prelude_single_party_found():
    for seed in range(20):
        t = run_protocol(common_prelude_spec(1, 3, 97), [1], seed)
        cause = classify_failure(t, 3, 1)
        assert (cause is None) == (t.outcome == ElementOutcome.found(1))


def test_prelude_modulus_guard():
    with pytest.raises(ValueError):
        common_prelude_spec(4, 2, 8)
    with pytest.warns(UserWarning):
        common_prelude_spec(4, 2, 8, audit=True)
    assert common_prelude_spec(4, 8).params["q"] == 131


def test_prelude_shares_mode_runs():
    out, spec = common_prelude([3] * 6, 4, sigma=8, seed=1, mode="shares")
    assert spec.rounds[0].messages_per_party == 4 * spec.params["ell"]
    assert out.status in (Status.FOUND, Status.FAIL)


def test_prelude_engines_agree():
    n, d, q, T = 8, 4, 67, 1500
    model = []
    for s in range(T):
        t = run_protocol(common_prelude_spec(n, d, q), [1] * n, s)
        model.append(classify_failure(t, d, 1) or "ok")
    vec = prelude_trials([1] * n, d, q, T, seed=99)
    labels = ["ok", "noise", "nobody", "accidental-zero", "wrong"]
    vec_samples = ["ok"] * vec["counts"]["correct"] + sum(([k] * vec["causes"][k] for k in labels[1:]), [])
    assert len(vec_samples) == T
    assert chi_squared_homogeneity(model, vec_samples).passes()


def test_prelude_trials_bookkeeping():
    r = prelude_trials([0, 1, 0], 3, 53, 500, seed=0)
    assert r["causes"] == {} and r["counts"]["correct"] == 0
    assert r["counts"]["found"] + r["counts"]["fail"] == 500
    assert failure_bounds(20, 8, 131)["accidental-zero"] == 8 / 131


# ---------------------------------------------------------------------------
# CommonTwoRound


def test_two_round_all_equal_injected():
    for seed in range(30):
        out, _ = common_two_round([5] * 6, 10, 1.0, 1e-3, seed, InjectedHistogram())
        assert out in (ElementOutcome.found(5), ElementOutcome.fail())


def test_two_round_threshold_flip():
    n = 50
    below = InjectedHistogram(lambda counts, m: {y: 0.97 * m for y in counts})
    at = InjectedHistogram(lambda counts, m: {y: 0.98 * m for y in counts})
    for seed in range(5):
        assert common_two_round([3] * n, 8, 1.0, 1e-3, seed, below)[0] == ElementOutcome.bottom()
        assert common_two_round([3] * n, 8, 1.0, 1e-3, seed, at)[0].status is not Status.BOTTOM


def test_two_round_split_inputs_do_not_crash():
    out, _ = common_two_round([1] * 5 + [2] * 5, 4, 1.0, 1e-3, 0)
    assert out.status in (Status.FOUND, Status.BOTTOM, Status.FAIL)


def test_two_round_validation_and_params():
    with pytest.raises(ValueError):
        common_two_round_spec(4, 4, 1.0, 0.0)
    with pytest.raises(ValueError):
        common_two_round_spec(1, 4, 1.0, 0.1)
    spec = common_two_round_spec(10**5, 50, 1.0, 1e-6, range_cap=10**6)
    assert spec.params["R"] == 10**6 and spec.params["candidates"] == "full"


def test_two_round_vectorized_matches_model_exact_histogram():
    for seed in range(10):
        out, oracle = two_round_vectorized([4] * 12, 6, 1.0, 1e-3, seed, InjectedHistogram())
        assert out.status in (Status.FOUND, Status.FAIL)
        assert out.status is not Status.FOUND or out.element == 4
        assert max(oracle.counts.values()) == 12


def test_two_round_real_histogram_small_runs():
    out, _ = common_two_round([2] * 40, 4, 4.0, 0.01, 1, LdpHistogram(4.0))
    assert out.status in (Status.FOUND, Status.BOTTOM, Status.FAIL)


# ---------------------------------------------------------------------------
# Nested


def test_nested_input_validation_and_target():
    inp = NestedInput((1, 1), ((0, 1), (1, 1)), 0.5, 2, 2)
    assert inp.target() == 1 and inp.split == 2
    assert NestedInput((0, 1), ((0, 1), (1, 1)), 0.5, 2, 2).target() is None
    with pytest.raises(ValueError):
        NestedInput((1, 1, 1), ((0, 1), (1, 1)), 0.5, 2, 2)
    with pytest.raises(ValueError):
        NestedInput((1, 1), ((0,), (1, 1)), 0.5, 2, 2)
    v = NestedInput.valid(24, 0.5, 4, 2, np.random.default_rng(0))
    assert v.target() is not None and v.n == 24


def test_nested_construction_identity():
    # x-party at x=1 and y-party with y[1]=0, both participating without noise: cell (1, 0) stays zero
    split, X, Y, q = 1, 2, 2, 7
    body = nested_vector_body(split, X, Y, q, 2)
    zx = replay_body(body, Context(0, 2, 0, b"", 1, ()), (1, 3, 4, 0))
    zy = replay_body(body, Context(1, 2, 0, b"", (1, 0), ()), (1, 5, 6, 0))
    total = [(a + b) % q for a, b in zip(zx, zy)]
    assert total[1 * Y + 0] == 0
    assert zero_cell(total, Y) == (1, 0)


def test_nested_one_round_rate_small():
    inp = NestedInput.valid(24, 0.5, 4, 2, np.random.default_rng(1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        outs = [nested_one_round(inp, seed=s)[0] for s in range(200)]
    rate = sum(o == ElementOutcome.found(inp.target()) for o in outs) / 200
    assert rate > 0.6


def test_nested_classifier_agrees_with_outcome():
    inp = NestedInput.valid(12, 0.5, 2, 2, np.random.default_rng(2))
    spec = nested_one_round_spec(12, 0.5, 2, 2)
    for s in range(50):
        t = run_protocol(spec, inp.party_inputs(), s)
        assert (classify_nested_failure(t, inp) is None) == (t.outcome == ElementOutcome.found(inp.target()))


def test_nested_trials_bookkeeping():
    inp = NestedInput.valid(24, 0.5, 4, 2, np.random.default_rng(3))
    r = nested_trials(inp, 131, 2000, seed=1)
    assert r["counts"]["correct"] + sum(r["causes"].values()) == 2000


def test_nested_split_guard():
    with pytest.raises(ValueError):
        nested_one_round_spec(2, 0.4, 2, 2)


def test_nested_two_round_plumbing():
    inp = NestedInput((2,) * 3, ((0, 1, 1), (1, 0, 1), (0, 0, 1)), 0.5, 3, 2)
    first = FixedOutcome(ElementOutcome.found(0))
    second = FixedOutcome(ElementOutcome.found(7))
    res = nested_two_round(inp, 0, first, second)
    assert second.calls == [(0, 1, 0)] and res.outcome == ElementOutcome.found(7)
    res = nested_two_round(inp, 0, FixedOutcome(ElementOutcome.bottom()), second)
    assert res.outcome == ElementOutcome.bottom() and res.second is None


def test_nested_two_round_valid_instance():
    inp = NestedInput.valid(12, 0.5, 5, 3, np.random.default_rng(4))
    for seed in range(10):
        assert nested_two_round(inp, seed, HeavyHitterSub(InjectedHistogram())).outcome == \
            ElementOutcome.found(inp.target())
        # with six parties per stage, all round-2 coins can come up bottom (probability 2^-6)
        out = nested_two_round(inp, seed, TwoRoundSub(InjectedHistogram())).outcome
        assert out.status is not Status.FOUND or out.element == inp.target()


def test_nested_two_round_disagreeing_x_parties():
    inp = NestedInput((0, 1, 2), ((0, 1, 1), (1, 0, 1), (0, 0, 1)), 0.5, 3, 2)
    assert nested_two_round(inp, 0, HeavyHitterSub(InjectedHistogram())).outcome.status in \
        (Status.FOUND, Status.BOTTOM, Status.FAIL)
