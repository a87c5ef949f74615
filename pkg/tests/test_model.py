import random

import pytest

from shuffledp.encoding import Tag, decode_message, encode_message
from shuffledp.model import (
    ChannelKind,
    Emit,
    FunctionRandomizer,
    ProtocolSpec,
    ProtocolStructureError,
    RoundSpec,
    coalition_view,
    ideal_sum_round,
    public_round,
    read_vector,
    replay_outcome,
    replay_steps,
    run_protocol,
    shuffle_round,
    vector_message,
)
from shuffledp.protocols import shuffled_rr_spec
from shuffledp.randomness import Bits, Uniform


def test_shuffle_round_single_message():
    assert shuffle_round([[b"a"]]) == (b"a",)


def test_shuffle_round_all_equal():
    assert shuffle_round([[b"x", b"x"], [b"x", b"x"]]) == (b"x",) * 4


def test_shuffle_round_matches_sort_oracle():
    rng = random.Random(4)
    for _ in range(50):
        n, ell = rng.randint(1, 6), rng.randint(1, 4)
        msgs = [[bytes(rng.randrange(256) for _ in range(rng.randint(1, 5))) for _ in range(ell)] for _ in range(n)]
        flat = [m for ms in msgs for m in ms]
        # independent oracle: insertion sort on the concatenation
        oracle: list[bytes] = []
        for m in flat:
            k = 0
            while k < len(oracle) and oracle[k] <= m:
                k += 1
            oracle.insert(k, m)
        assert shuffle_round(msgs, ell) == tuple(oracle)


def test_shuffle_round_rejects_wrong_count():
    with pytest.raises(ProtocolStructureError):
        shuffle_round([[b"a"], [b"b", b"c"]], 1)


def test_public_round_positional():
    assert public_round([[b"A"], [b"B"]]) == (b"A", b"B")
    assert public_round([[b"A"]]) == (b"A",)
    perm = [2, 0, 1]
    msgs = [[b"p"], [b"q"], [b"r"]]
    assert public_round([msgs[k] for k in perm]) == tuple(public_round(msgs)[k] for k in perm)
    with pytest.raises(ProtocolStructureError):
        public_round([[b"A", b"B"]])


def test_ideal_sum_round():
    out = ideal_sum_round([[vector_message((1, 2), 5)], [vector_message((4, 4), 5)]])
    assert read_vector(out[0]) == (5, (0, 1))
    with pytest.raises(ProtocolStructureError):
        ideal_sum_round([[vector_message((1,), 5)], [vector_message((1,), 7)]])


def test_round_spec_validation():
    with pytest.raises(ProtocolStructureError):
        RoundSpec(ChannelKind.PUBLIC, 2)
    with pytest.raises(ProtocolStructureError):
        RoundSpec(ChannelKind.SHUFFLE, 0)


def _two_round_spec(n=3):
    def body(ctx):
        if ctx.round == 0:
            v = yield Uniform(4)
            return Emit((encode_message(Tag.BIT, (ctx.x + v) % 4),), v)
        b = yield Bits(2)
        return Emit((encode_message(Tag.BIT, ctx.state, b, len(ctx.history[0])),), None)

    rz = FunctionRandomizer(body, (1, 1))
    return ProtocolSpec("toy", n, (RoundSpec(ChannelKind.SHUFFLE), RoundSpec(ChannelKind.PUBLIC)), (rz,) * n,
                        lambda w, outs, s: tuple(decode_message(m)[1] for m in outs[1]),
                        public_randomness_length=16)


def test_determinism_and_replay():
    spec = _two_round_spec()
    t1 = run_protocol(spec, [0, 1, 2], seed=9)
    t2 = run_protocol(spec, [0, 1, 2], seed=9)
    assert t1.serialize() == t2.serialize()
    assert run_protocol(spec, [0, 1, 2], seed=10).serialize() != t1.serialize()
    assert replay_outcome(spec, t1) == t1.outcome
    steps = replay_steps(spec, t1, 1)
    assert len(steps) == 2 and steps[0].record == t1.party_randomness[1][0]


def test_zero_round_protocol():
    spec = ProtocolSpec("empty", 2, (), (FunctionRandomizer(lambda ctx: iter(()), ()),) * 2,
                        lambda w, outs, s: None, public_randomness_length=8)
    t = run_protocol(spec, [1, 2], seed=0)
    assert t.channel_outputs == () and len(t.w) == 1 and t.inputs == (1, 2)


def test_malformed_message_vector_is_rejected():
    def body(ctx):
        return (b"a", b"b")
        yield  # pragma: no cover

    spec = ProtocolSpec("bad", 1, (RoundSpec(ChannelKind.SHUFFLE),), (FunctionRandomizer(body, (1,)),),
                        lambda w, o, s: None)
    with pytest.raises(ProtocolStructureError):
        run_protocol(spec, [0], 0)


def test_spec_structure_checks():
    rz = FunctionRandomizer(lambda ctx: iter(()), (2,))
    with pytest.raises(ProtocolStructureError):
        ProtocolSpec("x", 1, (RoundSpec(ChannelKind.SHUFFLE, 1),), (rz,), lambda *a: None)
    with pytest.raises(ProtocolStructureError):
        ProtocolSpec("x", 2, (RoundSpec(ChannelKind.SHUFFLE, 2),), (rz,), lambda *a: None)
    with pytest.raises(ProtocolStructureError):
        run_protocol(shuffled_rr_spec(2, 1.0), [0], 0)


def test_coalition_views():
    spec = _two_round_spec(4)
    t = run_protocol(spec, [3, 1, 2, 0], seed=1)
    empty = coalition_view(t, ())
    assert empty.inputs == () and empty.randomness == ()
    assert empty.w == t.w and empty.channel_outputs == t.channel_outputs
    v = coalition_view(t, [3, 0, 2])
    assert v.coalition == (0, 2, 3)
    assert v.inputs == (3, 2, 0)
    assert 1 not in v.coalition and t.party_randomness[1] not in v.randomness
    d, td = v.to_dict(), t.to_dict()
    assert d["w"] == td["w"] and d["channel_outputs"] == td["channel_outputs"]
    assert d["randomness"] == [td["party_randomness"][i] for i in (0, 2, 3)]
    assert v.encode() == coalition_view(t, [0, 2, 3]).encode()
    with pytest.raises(ValueError):
        coalition_view(t, [4])
