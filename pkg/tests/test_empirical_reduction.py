import json
import math
from collections import Counter
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from shuffledp.audit import (
    FiniteDistribution,
    LocalRandomizer,
    chi_squared_gof,
    chi_squared_homogeneity,
    clopper_pearson,
    mi_diagnostic,
    tv_estimate,
    tv_from_samples,
)
from shuffledp.audit.reduction import expected_selection_probability, mi_reference, own_message_joint
from shuffledp.encoding import Tag, encode_message
from shuffledp.model import ChannelKind, Emit, FunctionRandomizer, ProtocolSpec, RoundSpec
from shuffledp.primitives import ikos_sum_spec
from shuffledp.protocols import common_prelude_spec, identity_spec, input_ignoring_spec, shuffled_rr_spec
from shuffledp.randomness import Uniform

DATA = Path(__file__).parent / "data"


def test_tv_estimate_identical_and_disjoint():
    same = tv_estimate(lambda r: int(r.integers(4)), lambda r: int(r.integers(4)), 5000, seed=1)
    assert same.estimate < 0.05 and same.low <= same.estimate <= same.high
    apart = tv_estimate(lambda r: 0, lambda r: 1, 1000)
    assert apart.estimate == 1.0 and apart.contains(1.0)
    with pytest.raises(ValueError):
        tv_estimate(lambda r: 0, lambda r: 0, 999)


def test_tv_estimate_bernoulli_interval():
    iv = tv_estimate(lambda r: int(r.random() < 0.5), lambda r: int(r.random() < 0.25), 10**5, seed=3)
    assert iv.contains(0.25)
    assert iv.high - iv.low < 0.02
    with pytest.raises(ValueError):
        tv_from_samples([], [1])


def test_clopper_pearson():
    iv = clopper_pearson(0, 10)
    assert iv.low == 0.0 and iv.high == pytest.approx(1 - 0.025 ** (1 / 10))
    iv = clopper_pearson(50, 100)
    assert iv.low < 0.5 < iv.high
    with pytest.raises(ValueError):
        clopper_pearson(3, 2)


def test_chi_squared_accepts_true_law_and_rejects_wrong_one():
    rng = np.random.default_rng(0)
    probs = {0: 0.5, 1: 0.3, 2: 0.2}
    samples = rng.choice(3, size=20000, p=list(probs.values())).tolist()
    assert chi_squared_gof(samples, probs).passes()
    assert not chi_squared_gof(samples, {0: 1 / 3, 1: 1 / 3, 2: 1 / 3}).passes()
    assert not chi_squared_gof([0, 0, 3], probs).passes()  # outside the support
    other = rng.choice(3, size=20000, p=[0.5, 0.3, 0.2]).tolist()
    assert chi_squared_homogeneity(samples, other).passes()
    assert not chi_squared_homogeneity(samples, [0] * 20000).passes()


# ---------------------------------------------------------------------------
# local randomizer reduction


def _two_message_spec(n):
    def body(ctx):
        u = yield Uniform(2)
        return Emit((encode_message(Tag.BIT, ctx.x), encode_message(Tag.BIT, u)), None)

    rz = FunctionRandomizer(body, (2,))
    return ProtocolSpec("two-message", n, (RoundSpec(ChannelKind.SHUFFLE, 2),), (rz,) * n, lambda w, o, s: None)


def test_single_party_keeps_own_messages():
    lr = LocalRandomizer(identity_spec(1), 0, [0, 1, 2])
    for trial in range(20):
        out = lr.sample(2, trial)
        assert out.selected_own and out.messages == out.own


@pytest.mark.parametrize("spec, want", [
    (identity_spec(2), Fraction(1, 2)),
    (_two_message_spec(2), Fraction(1, 6)),
    (shuffled_rr_spec(3, 1.0), Fraction(1, 3)),
])
def test_selection_probability_exact(spec, want):
    ell = spec.rounds[0].messages_per_party
    assert expected_selection_probability(spec.n, ell) == want
    lr = LocalRandomizer(spec, 0, [0, 1])
    for x in (0, 1):
        assert lr.selection_probability(x) == want
        assert sum(p for p, _ in lr.enumerate(x)) == 1


def test_sampled_outputs_follow_enumerated_law():
    lr = LocalRandomizer(shuffled_rr_spec(2, 1.0), 1, [0, 1], seed=5)
    law = Counter()
    for p, out in lr.enumerate(1):
        law[out.messages] += p
    samples = Counter(lr.sample(1, t).messages for t in range(20000))
    assert chi_squared_gof(samples, {k: float(v) for k, v in law.items()}).passes()


def test_reduction_needs_one_shuffle_round():
    with pytest.raises(ValueError):
        LocalRandomizer(identity_spec(2), 5, [0])

    def body(ctx):
        return Emit((encode_message(Tag.BIT, ctx.x),), None)
        yield

    rz = FunctionRandomizer(body, (1, 1))
    two_round = ProtocolSpec("two", 1, (RoundSpec(ChannelKind.SHUFFLE), RoundSpec(ChannelKind.SHUFFLE)),
                             (rz,), lambda w, o, s: None)
    with pytest.raises(ValueError):
        LocalRandomizer(two_round, 0, [0])
    with pytest.raises(ValueError):
        mi_diagnostic(two_round, 0, [0], 1.0, 0.0)


def test_mi_diagnostic_extremes():
    assert mi_diagnostic(identity_spec(2), 0, range(4), 1.0, 0.0).measured == pytest.approx(2.0, abs=1e-12)
    assert mi_diagnostic(input_ignoring_spec(2), 0, range(4), 1.0, 0.0).measured == 0.0


def test_mi_diagnostic_prelude_matches_frozen_oracle():
    frozen = json.loads((DATA / "prelude_mi.json").read_text())
    with pytest.warns(UserWarning):
        spec = common_prelude_spec(frozen["n"], frozen["domain_size"], frozen["q"], audit=True)
    got = mi_diagnostic(spec, 0, range(frozen["domain_size"]), 1.0, 1e-6)
    assert got.measured == pytest.approx(float(frozen["mutual_information_bits"]), abs=1e-12)
    assert got.to_dict()["non_binding"] is True


def test_rr_mutual_information_closed_form():
    spec = shuffled_rr_spec(2, 1.0)
    p = float(spec.randomizers[0].keep)
    want = 1 - (-(p * math.log2(p) + (1 - p) * math.log2(1 - p)))
    assert mi_diagnostic(spec, 0, [0, 1], 1.0, 0.0).measured == pytest.approx(want, abs=1e-12)


def test_own_message_joint_and_reference():
    j = own_message_joint(ikos_sum_spec(2, 3, 1, ell=2), 0, [(0,), (1,)])
    assert isinstance(j.marginal(2), FiniteDistribution)
    assert j.marginal(2)[(0,)] == Fraction(1, 2)
    assert mi_reference(1, 1, 1.0, 0.0, 2) == pytest.approx(math.e + math.log2(4 * math.e))
