"""Small reference protocols used by audits and tests."""

from __future__ import annotations

from collections import Counter

from ..encoding import Tag, decode_message, encode_message
from ..model import ChannelKind, Context, ProtocolSpec, Randomizer, RoundSpec
from ..randomness import Bernoulli, Uniform, rr_keep_probability


class _RR(Randomizer):
    counts = (1,)

    def __init__(self, epsilon: float):
        self.keep = rr_keep_probability(epsilon)

    def body(self, ctx: Context):
        kept = yield Bernoulli(self.keep)
        return (encode_message(Tag.BIT, ctx.x if kept else 1 - ctx.x),)


class _Coin(Randomizer):
    counts = (1,)

    def body(self, ctx: Context):
        return (encode_message(Tag.BIT, (yield Uniform(2))),)


class _Identity(Randomizer):
    counts = (1,)

    def body(self, ctx: Context):
        return (encode_message(Tag.CLEAR, ctx.x),)
        yield  # pragma: no cover


def _bit_histogram(w, outputs, setup):
    c = Counter(decode_message(m)[1][0] for m in outputs[0])
    return (c.get(0, 0), c.get(1, 0))


def shuffled_rr_spec(n: int, epsilon: float) -> ProtocolSpec:
    """Each party sends its bit through randomized response; analyzer counts ones."""
    return ProtocolSpec("shuffled-rr", n, (RoundSpec(ChannelKind.SHUFFLE),), (_RR(epsilon),) * n,
                        _bit_histogram, params={"epsilon": epsilon})


def input_ignoring_spec(n: int) -> ProtocolSpec:
    """Each party sends a fair coin regardless of its input."""
    return ProtocolSpec("input-ignoring", n, (RoundSpec(ChannelKind.SHUFFLE),), (_Coin(),) * n, _bit_histogram)


def identity_spec(n: int) -> ProtocolSpec:
    """Each party sends its input in the clear."""
    return ProtocolSpec("identity", n, (RoundSpec(ChannelKind.SHUFFLE),), (_Identity(),) * n,
                        lambda w, outputs, setup: tuple(decode_message(m)[1][0] for m in outputs[0]))
