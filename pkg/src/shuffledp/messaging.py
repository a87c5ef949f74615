"""Key exchange, one-round secure message transmission, and pairwise channels.

Tag layout (all fields use the canonical field encoding of ``encoding``)::

    KEY_BIT     0x10 | lo | hi | dir | idx | bit
    SMT_CIPHER  0x11 | lo | hi | dir | hash | cipher

``lo, hi`` are the endpoint indices in increasing order, so both endpoints
write the same header. ``dir`` is 0 when the sender is ``lo`` and 1 when it
is ``hi``; plain key exchange uses ``dir = 0``. ``idx`` runs from 1. ``hash``
is the Toeplitz description as an int (diagonal bits low, offset bits
high) and ``cipher`` is the padded message xor the hash output.

A message of at most k bits is padded to k+1 bits as ``M | 1 | 0...``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from fractions import Fraction
from math import comb
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .encoding import Message, Tag, decode_message, encode_message
from .model import (
    ChannelKind,
    Context,
    Emit,
    ProtocolSpec,
    Randomizer,
    RoundSpec,
    Transcript,
    public_round,
    replay_steps,
    run_protocol,
    shuffle_round,
)
from .primitives import ToeplitzHash
from .randomness import Bits, RandomStream

Bitstring = tuple[int, ...]


def pair_header(i: int, j: int) -> tuple[int, int, int]:
    if i == j:
        raise ValueError("endpoints must differ")
    return (min(i, j), max(i, j), 0 if i < j else 1)


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for c, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError("bits must be 0 or 1")
        out |= b << c
    return out


def int_to_bits(v: int, length: int) -> Bitstring:
    return tuple((v >> c) & 1 for c in range(length))


@lru_cache(maxsize=1 << 16)
def key_bit_message(header: tuple[int, int, int], idx: int, bit: int) -> Message:
    return encode_message(Tag.KEY_BIT, *header, idx, bit)


@lru_cache(maxsize=1 << 16)
def _key_bit_fields(m: Message) -> tuple[Any, ...]:
    return decode_message(m)[1]


def collect_key_bits(output: Sequence[Message], header: tuple[int, int, int]) -> dict[int, list[int]]:
    """Bits published under ``header``, grouped by index."""
    found: dict[int, list[int]] = {}
    for m in output:
        if m[0] != Tag.KEY_BIT:
            continue
        lo, hi, d, idx, bit = _key_bit_fields(m)
        if (lo, hi, d) == header:
            found.setdefault(idx, []).append(bit)
    return found


# ---------------------------------------------------------------------------
# Key exchange


class KeyStatus(str, Enum):
    KEY = "key"
    FAIL = "fail"


@dataclass(frozen=True)
class KeyExchangeOutcome:
    status: KeyStatus
    key: Bitstring | None = None

    def __post_init__(self):
        if (self.status is KeyStatus.KEY) != (self.key is not None):
            raise ValueError("key must be present exactly when status is KEY")


def key_exchange_messages(i: int, j: int, k: int, rng: RandomStream) -> tuple[Bitstring, tuple[Message, ...]]:
    header = pair_header(i, j)
    bits = int_to_bits(rng.bits(3 * k), 3 * k)
    return bits, tuple(key_bit_message((header[0], header[1], 0), idx + 1, b) for idx, b in enumerate(bits))


def derive_key(own: Bitstring, output: Sequence[Message], i: int, j: int, k: int, initiator: bool) -> KeyExchangeOutcome:
    """Outcome as computed by one endpoint from its own bits and the shuffle output.

    The initiator keeps its own bit at each disagreeing index, the responder
    flips its own bit, so both land on the initiator's bits.
    """
    lo, hi, _ = pair_header(i, j)
    seen = collect_key_bits(output, (lo, hi, 0))
    key = []
    for idx in range(1, 3 * k + 1):
        if sorted(seen.get(idx, ())) == [0, 1]:
            b = own[idx - 1]
            key.append(b if initiator else 1 - b)
            if len(key) == k:
                return KeyExchangeOutcome(KeyStatus.KEY, tuple(key))
    return KeyExchangeOutcome(KeyStatus.FAIL)


def key_exchange(i: int, j: int, k: int, rng_i: RandomStream, rng_j: RandomStream):
    """Run one key exchange; returns (shuffle output, outcome at i, outcome at j)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    a, ma = key_exchange_messages(i, j, k, rng_i)
    b, mb = key_exchange_messages(i, j, k, rng_j)
    out = shuffle_round([ma, mb])
    return out, derive_key(a, out, i, j, k, True), derive_key(b, out, i, j, k, False)


def key_exchange_failure_probability(k: int) -> Fraction:
    """Exact Pr[Bin(3k, 1/2) <= k - 1]."""
    return Fraction(sum(comb(3 * k, m) for m in range(k)), 1 << (3 * k))


# ---------------------------------------------------------------------------
# Secure message transmission


def pad_message(M: Sequence[int], k: int) -> int:
    if len(M) > k:
        raise ValueError(f"message has {len(M)} bits, at most {k} allowed")
    return bits_to_int(tuple(M) + (1,))


def unpad_message(v: int) -> Bitstring:
    if v == 0:
        raise ValueError("padded block carries no end marker")
    top = v.bit_length() - 1
    return int_to_bits(v, top)


def smt_hash_shape(k: int) -> tuple[int, int]:
    return 7 * k, k + 1


def cipher_message(header: tuple[int, int, int], h: ToeplitzHash, c: int) -> Message:
    return encode_message(Tag.SMT_CIPHER, *header, h.bits(), c)


@dataclass(frozen=True)
class SmtBundle:
    i: int
    j: int
    k: int
    a: int
    h: ToeplitzHash
    cipher: int
    sender_messages: tuple[Message, ...]
    receiver_messages: tuple[Message, ...] = field(default=())

    @property
    def messages(self) -> tuple[Message, ...]:
        return self.sender_messages + self.receiver_messages


def smt_sender_body(i: int, j: int, M: Sequence[int], k: int):
    header = pair_header(i, j)
    n_in, m_out = smt_hash_shape(k)
    padded = pad_message(M, k)
    a = yield Bits(n_in)
    hbits = yield Bits(ToeplitzHash.description_bits(n_in, m_out))
    h = ToeplitzHash.from_bits(n_in, m_out, hbits)
    c = h(a) ^ padded
    msgs = tuple(key_bit_message(header, idx + 1, (a >> idx) & 1) for idx in range(n_in))
    return a, h, c, msgs + (cipher_message(header, h, c),)


def smt_receiver_body(i: int, j: int, k: int):
    header = pair_header(i, j)
    n_in, _ = smt_hash_shape(k)
    b = yield Bits(n_in)
    return b, tuple(key_bit_message(header, idx + 1, (b >> idx) & 1) for idx in range(n_in))


def _drive(gen, rng: RandomStream):
    try:
        draw = next(gen)
        while True:
            draw = gen.send(draw.sample(rng))
    except StopIteration as stop:
        return stop.value


def smt_send(i: int, j: int, M: Sequence[int], k: int, rng_i: RandomStream) -> SmtBundle:
    a, h, c, msgs = _drive(smt_sender_body(i, j, M, k), rng_i)
    return SmtBundle(i, j, k, a, h, c, msgs)


def smt_receiver_messages(i: int, j: int, k: int, rng_j: RandomStream) -> tuple[int, tuple[Message, ...]]:
    return _drive(smt_receiver_body(i, j, k), rng_j)


def smt_receive(b: int, output: Sequence[Message], i: int, j: int, k: int) -> Bitstring:
    """Receiver j recovers M from its own bits ``b`` and the shuffle output."""
    header = pair_header(i, j)
    n_in, m_out = smt_hash_shape(k)
    seen = collect_key_bits(output, header)
    a = 0
    for idx in range(1, n_in + 1):
        pair = list(seen.get(idx, ()))
        own = (b >> (idx - 1)) & 1
        if len(pair) != 2 or own not in pair:
            raise ValueError(f"shuffle output lacks the index-{idx} pair for {header}")
        pair.remove(own)
        a |= pair[0] << (idx - 1)
    for m in output:
        if m[0] == Tag.SMT_CIPHER:
            _, (lo, hi, d, hbits, c) = decode_message(m)
            if (lo, hi, d) == header:
                h = ToeplitzHash.from_bits(n_in, m_out, hbits)
                return unpad_message(c ^ h(a))
    raise ValueError(f"no cipher message for {header}")


def smt_transmit(i: int, j: int, M: Sequence[int], k: int, seed: int) -> tuple[SmtBundle, Bitstring]:
    """Both halves plus a shuffle; returns (bundle, message recovered by j)."""
    rng_i = RandomStream.from_seed(seed, "smt", i, j, "sender")
    rng_j = RandomStream.from_seed(seed, "smt", i, j, "receiver")
    bundle = smt_send(i, j, M, k, rng_i)
    b, recv = smt_receiver_messages(i, j, k, rng_j)
    bundle = SmtBundle(bundle.i, bundle.j, k, bundle.a, bundle.h, bundle.cipher, bundle.sender_messages, recv)
    out = shuffle_round([bundle.sender_messages + recv])
    return bundle, smt_receive(b, out, i, j, k)


def _toeplitz_outputs(n_in: int, m_out: int) -> np.ndarray:
    """table[a, hbits] = h(a) for every input and every hash description."""
    dlen = n_in + m_out - 1
    n_desc = 1 << ToeplitzHash.description_bits(n_in, m_out)
    desc = np.arange(n_desc, dtype=np.int64)
    diag = desc & ((1 << dlen) - 1)
    offset = desc >> dlen
    a = np.arange(1 << n_in, dtype=np.int64)
    out = np.zeros((1 << n_in, n_desc), dtype=np.int64)
    for r in range(m_out):
        row = np.zeros(n_desc, dtype=np.int64)
        for c in range(n_in):
            row |= ((diag >> (r - c + n_in - 1)) & 1) << c
        parity = np.bitwise_count(a[:, None] & row[None, :]) & 1
        out |= parity.astype(np.int64) << r
    return out ^ offset[None, :]


def smt_view_counts(M: Sequence[int], k: int) -> np.ndarray:
    """Unnormalized distribution of the outside view for message M.

    The view is the index-wise multiset {a_l, b_l}, the hash, and the cipher.
    Every (a, b, hash) triple has equal weight, so counts[view] divided by
    2^(14k + hash bits) is the exact probability.
    """
    n_in, m_out = smt_hash_shape(k)
    if n_in > 14:
        raise ValueError("exhaustive view enumeration is only feasible for k <= 2")
    table = _toeplitz_outputs(n_in, m_out)
    n_desc = table.shape[1]
    padded = pad_message(M, k)
    vals = np.arange(1 << n_in, dtype=np.int64)
    digits = (vals[:, None] >> np.arange(n_in)) & 1
    pow3 = 3 ** np.arange(n_in, dtype=np.int64)
    # pattern index of (a, b): sum over l of (a_l + b_l) * 3^l
    pattern = (digits[:, None, :] + digits[None, :, :]) @ pow3
    n_pat = 3 ** n_in
    n_c = 1 << m_out
    counts = np.zeros(n_pat * n_desc * n_c, dtype=np.int64)
    hv = table ^ padded
    desc = np.arange(n_desc, dtype=np.int64)
    for a in range(1 << n_in):
        idx = (pattern[a][:, None] * n_desc + desc[None, :]) * n_c + hv[a][None, :]
        counts += np.bincount(idx.ravel(), minlength=counts.size)
    return counts


def smt_view_distance(M0: Sequence[int], M1: Sequence[int], k: int = 1) -> Fraction:
    """Exact total variation distance between the outside views for M0 and M1."""
    c0 = smt_view_counts(M0, k)
    c1 = smt_view_counts(M1, k)
    n_in, m_out = smt_hash_shape(k)
    total = 1 << (2 * n_in + ToeplitzHash.description_bits(n_in, m_out))
    diff = int(np.abs(c0 - c1).sum())
    return Fraction(diff, 2 * total)


# ---------------------------------------------------------------------------
# Pairwise channels and the two-round shell


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def pairwise_body(ctx_party: int, n: int, payloads: Mapping[int, Sequence[int]], k: int):
    """All SMT halves party ``ctx_party`` contributes in one round.

    Returns (messages, receiver bits keyed by sender).
    """
    msgs: list[Message] = []
    recv_bits: dict[int, int] = {}
    for i, j in ordered_pairs(n):
        if i == ctx_party:
            _, _, _, m = yield from smt_sender_body(i, j, payloads.get(j, ()), k)
            msgs.extend(m)
        elif j == ctx_party:
            b, m = yield from smt_receiver_body(i, j, k)
            recv_bits[i] = b
            msgs.extend(m)
    return tuple(msgs), recv_bits


def messages_per_party(n: int, k: int) -> int:
    return (n - 1) * (14 * k + 1)


def open_deliveries(party: int, recv_bits: Mapping[int, int], output: Sequence[Message], k: int) -> dict[int, Bitstring]:
    return {i: smt_receive(b, output, i, party, k) for i, b in recv_bits.items()}


class _ChannelRandomizer(Randomizer):
    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.counts = (messages_per_party(n, k),)

    def body(self, ctx: Context):
        msgs, recv = yield from pairwise_body(ctx.party, self.n, ctx.x, self.k)
        return Emit(msgs, tuple(sorted(recv.items())))


def pairwise_channels_spec(n: int, k: int) -> ProtocolSpec:
    """Single shuffle round carrying all n(n-1) SMT instances.

    Party inputs are mappings from recipient index to a bit tuple.
    """
    if n < 2:
        raise ValueError("need at least two parties")
    rz = _ChannelRandomizer(n, k)
    return ProtocolSpec(
        name="pairwise-channels",
        n=n,
        rounds=(RoundSpec(ChannelKind.SHUFFLE, rz.counts[0]),),
        randomizers=(rz,) * n,
        analyzer=lambda w, outputs, setup: None,
        params={"k": k},
    )


def pairwise_channels_round(payloads: Mapping[tuple[int, int], Sequence[int]], n: int, k: int, seed: int,
                            pair_shuffle: bool = False) -> dict[tuple[int, int], Bitstring]:
    """Deliver every payload M[i, j] from i to j in one round.

    With ``pair_shuffle`` each index pair goes through its own two-message
    shuffle and ciphers travel on the public channel, instead of one global
    shuffle of everything.
    """
    for (i, j), M in payloads.items():
        if len(M) > k:
            raise ValueError(f"payload {i}->{j} exceeds {k} bits")
    inputs = [{j: tuple(M) for (i2, j), M in payloads.items() if i2 == i} for i in range(n)]
    if not pair_shuffle:
        spec = pairwise_channels_spec(n, k)
        t = run_protocol(spec, inputs, seed)
        return deliveries_from_transcript(spec, t)
    return _pair_shuffle_round(inputs, n, k, seed)


def deliveries_from_transcript(spec: ProtocolSpec, t: Transcript, rnd: int = 0) -> dict[tuple[int, int], Bitstring]:
    out: dict[tuple[int, int], Bitstring] = {}
    k = spec.params["k"]
    for j in range(spec.n):
        step = replay_steps(spec, t, j)[rnd]
        recv = dict(step.state)
        for i, M in open_deliveries(j, recv, t.channel_outputs[rnd], k).items():
            out[(i, j)] = M
    return out


def _pair_shuffle_round(inputs, n: int, k: int, seed: int) -> dict[tuple[int, int], Bitstring]:
    n_in, m_out = smt_hash_shape(k)
    delivered = {}
    for i, j in ordered_pairs(n):
        s = RandomStream.from_seed(seed, "pair-shuffle", i, j)
        a, h, c, sender = _drive(smt_sender_body(i, j, inputs[i].get(j, ()), k), s)
        b, receiver = _drive(smt_receiver_body(i, j, k), s)
        a_rec = 0
        for idx in range(n_in):
            pair = list(shuffle_round([(sender[idx],), (receiver[idx],)], 1))
            bits = [decode_message(m)[1][4] for m in pair]
            own = (b >> idx) & 1
            bits.remove(own)
            a_rec |= bits[0] << idx
        (cipher,) = public_round([sender[-1]])
        _, (_, _, _, hbits, cval) = decode_message(cipher)
        delivered[(i, j)] = unpad_message(cval ^ ToeplitzHash.from_bits(n_in, m_out, hbits)(a_rec))
    return delivered


class InnerProtocol(Protocol):
    """Interface for a protocol that assumes private pairwise channels."""

    rounds: int
    bits: int

    def round_body(self, party: int, n: int, x: Any, received: tuple[dict[int, Bitstring], ...], rnd: int,
                   state: Any):
        """Generator yielding draws; returns (recipient -> payload bits, new state)."""

    def output(self, party: int, n: int, x: Any, received: tuple[dict[int, Bitstring], ...], state: Any) -> Any:
        ...


class _ShellRandomizer(Randomizer):
    def __init__(self, inner: InnerProtocol, n: int, k: int):
        self.inner = inner
        self.n = n
        self.k = k
        self.counts = (messages_per_party(n, k),) * inner.rounds

    def body(self, ctx: Context):
        received, recv_bits, inner_state = ctx.state if ctx.state is not None else ((), (), None)
        if ctx.round > 0:
            got = open_deliveries(ctx.party, dict(recv_bits), ctx.history[-1], self.k)
            received = received + (got,)
        payloads, inner_state = yield from self.inner.round_body(
            ctx.party, self.n, ctx.x, received, ctx.round, inner_state)
        msgs, recv = yield from pairwise_body(ctx.party, self.n, payloads, self.k)
        return Emit(msgs, (received, tuple(sorted(recv.items())), inner_state))


def mpc_in_shuffle_spec(inner: InnerProtocol, n: int, k: int | None = None) -> ProtocolSpec:
    k = inner.bits if k is None else k
    if k < inner.bits:
        raise ValueError("security parameter must cover the inner payload size")
    rz = _ShellRandomizer(inner, n, k)
    return ProtocolSpec(
        name="mpc-in-shuffle",
        n=n,
        rounds=tuple(RoundSpec(ChannelKind.SHUFFLE, c) for c in rz.counts),
        randomizers=(rz,) * n,
        analyzer=lambda w, outputs, setup: None,
        params={"k": k},
    )


def mpc_local_outputs(spec: ProtocolSpec, inner: InnerProtocol, t: Transcript) -> list[Any]:
    """Each party's output: replay its state, open the last round, apply the inner output rule."""
    k = spec.params["k"]
    outs = []
    for p in range(spec.n):
        received, recv_bits, state = replay_steps(spec, t, p)[-1].state
        received = received + (open_deliveries(p, dict(recv_bits), t.channel_outputs[-1], k),)
        outs.append(inner.output(p, spec.n, t.inputs[p], received, state))
    return outs


class AdditionInner:
    """Demo inner protocol: sum of b-bit inputs mod 2^b over private channels.

    Round 0 sends additive shares; round 1 sends each party's partial sum to all.
    """

    rounds = 2

    def __init__(self, b: int = 8):
        self.bits = b
        self.mod = 1 << b

    def round_body(self, party, n, x, received, rnd, state):
        if rnd == 0:
            shares = []
            for _ in range(n - 1):
                shares.append((yield Bits(self.bits)))
            own = (x - sum(shares)) % self.mod
            others = [j for j in range(n) if j != party]
            return {j: int_to_bits(s, self.bits) for j, s in zip(others, shares)}, own
        partial = (state + sum(bits_to_int(v) for v in received[0].values())) % self.mod
        return {j: int_to_bits(partial, self.bits) for j in range(n) if j != party}, partial

    def output(self, party, n, x, received, state):
        return (state + sum(bits_to_int(v) for v in received[1].values())) % self.mod
