"""Executable model of a multi-round protocol over shuffle and public channels.

Parties are stateful randomizers. Each round every party emits a fixed
number of messages; the channel then publishes either the sorted multiset
(shuffle), the party-ordered list (public), or a single message holding the
group sum of one vector per party (ideal sum, an audit-only hybrid).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, NamedTuple, Sequence

from .encoding import Message, Tag, decode_message, decode_tuple, encode_message, encode_tuple
from .randomness import RandomStream, enumerate_body, record_of, replay_body, sample_body

FORMAT_VERSION = 1


class ProtocolStructureError(ValueError):
    """A randomizer or channel input violates the declared round structure."""


class ChannelKind(str, Enum):
    SHUFFLE = "shuffle"
    PUBLIC = "public"
    IDEAL_SUM = "ideal-sum"


@dataclass(frozen=True)
class RoundSpec:
    kind: ChannelKind
    messages_per_party: int = 1

    def __post_init__(self):
        if self.messages_per_party < 1:
            raise ProtocolStructureError("messages_per_party must be at least 1")
        if self.kind is not ChannelKind.SHUFFLE and self.messages_per_party != 1:
            raise ProtocolStructureError(f"{self.kind.value} rounds carry exactly one message per party")


@dataclass(frozen=True)
class Context:
    """Everything a randomizer may look at when producing a round's messages."""

    party: int
    n: int
    round: int
    w: bytes
    x: Any
    history: tuple[tuple[Message, ...], ...]
    state: Any = None
    setup: Any = None


class Emit(NamedTuple):
    messages: tuple[Message, ...]
    state: Any = None


@dataclass(frozen=True)
class Step:
    """One party's contribution to one round.

    ``record`` is the canonical encoding of the random choices made, so the
    step can always be rebuilt with :meth:`Randomizer.replay`.
    """

    record: bytes
    messages: tuple[Message, ...]
    state: Any = field(default=None, compare=False)


class Randomizer:
    """Base class: subclasses set ``counts`` and implement ``body``.

    ``body(ctx)`` is a generator yielding draw requests and returning either
    a message tuple or an :class:`Emit`.
    """

    counts: tuple[int, ...] = ()

    def body(self, ctx: Context):
        raise NotImplementedError

    def message_counts(self) -> tuple[int, ...]:
        return tuple(self.counts)

    def _step(self, ctx: Context, choices: Sequence[int], result: Any) -> Step:
        if isinstance(result, Emit):
            msgs, state = result
        else:
            msgs, state = result, None
        msgs = tuple(msgs)
        expected = self.message_counts()[ctx.round]
        if len(msgs) != expected or not all(isinstance(m, bytes) and m for m in msgs):
            raise ProtocolStructureError(
                f"party {ctx.party} emitted a malformed message vector in round {ctx.round}"
                f" ({len(msgs)} messages, expected {expected})"
            )
        return Step(record_of(choices), msgs, state)

    def sample(self, ctx: Context, stream: RandomStream) -> Step:
        choices, result = sample_body(self.body, ctx, stream)
        return self._step(ctx, choices, result)

    def enumerate(self, ctx: Context, limit: int | None = None) -> list[tuple[Fraction, Step]]:
        return [(p, self._step(ctx, ch, res)) for p, ch, res in enumerate_body(self.body, ctx, limit)]

    def replay(self, ctx: Context, record: bytes) -> Step:
        choices = decode_tuple(record)
        return self._step(ctx, choices, replay_body(self.body, ctx, choices))


class FunctionRandomizer(Randomizer):
    """Randomizer built from a body function; handy for small ad hoc protocols."""

    def __init__(self, body: Callable[[Context], Any], counts: Sequence[int]):
        self._body = body
        self.counts = tuple(counts)

    def body(self, ctx: Context):
        return self._body(ctx)


Analyzer = Callable[[bytes, tuple[tuple[Message, ...], ...], Any], Any]


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    n: int
    rounds: tuple[RoundSpec, ...]
    randomizers: tuple[Randomizer, ...]
    analyzer: Analyzer
    public_randomness_length: int = 0
    setup: Any = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ProtocolStructureError("n must be positive")
        if len(self.randomizers) != self.n:
            raise ProtocolStructureError(f"expected {self.n} randomizers, got {len(self.randomizers)}")
        for i, r in enumerate(self.randomizers):
            counts = r.message_counts()
            want = tuple(rs.messages_per_party for rs in self.rounds)
            if counts != want:
                raise ProtocolStructureError(f"party {i} declares message counts {counts}, rounds need {want}")

    @property
    def r(self) -> int:
        return len(self.rounds)


# ---------------------------------------------------------------------------
# Channels


def shuffle_round(per_party: Sequence[Sequence[Message]], ell: int | None = None) -> tuple[Message, ...]:
    """Canonical shuffle: the lexicographically sorted multiset of all messages."""
    if ell is None and per_party:
        ell = len(per_party[0])
    out: list[Message] = []
    for i, msgs in enumerate(per_party):
        if len(msgs) != ell:
            raise ProtocolStructureError(f"party {i} contributed {len(msgs)} messages, expected {ell}")
        out.extend(msgs)
    return tuple(sorted(out))


def public_round(per_party: Sequence[Sequence[Message] | Message]) -> tuple[Message, ...]:
    """Public channel: party i's message lands at position i."""
    out: list[Message] = []
    for i, msgs in enumerate(per_party):
        if isinstance(msgs, bytes):
            out.append(msgs)
            continue
        if len(msgs) != 1:
            raise ProtocolStructureError(f"party {i} sent {len(msgs)} messages on a public round")
        out.append(msgs[0])
    return tuple(out)


def vector_message(entries: Sequence[int], q: int) -> Message:
    return encode_message(Tag.VECTOR, q, tuple(int(e) for e in entries))


def read_vector(msg: Message) -> tuple[int, tuple[int, ...]]:
    tag, fields = decode_message(msg)
    if tag != Tag.VECTOR or len(fields) != 2:
        raise ProtocolStructureError("ideal-sum rounds accept only vector messages")
    return fields[0], tuple(fields[1])


def add_vectors(acc: tuple[int, tuple[int, ...]] | None, msg: Message) -> tuple[int, tuple[int, ...]]:
    q, v = read_vector(msg)
    if acc is None:
        return q, tuple(e % q for e in v)
    q0, a = acc
    if q0 != q or len(a) != len(v):
        raise ProtocolStructureError("ideal-sum vectors disagree on modulus or length")
    return q, tuple((s + e) % q for s, e in zip(a, v))


def ideal_sum_round(per_party: Sequence[Sequence[Message]]) -> tuple[Message, ...]:
    """Hybrid channel revealing only the coordinate-wise group sum."""
    acc = None
    for i, msgs in enumerate(per_party):
        if len(msgs) != 1:
            raise ProtocolStructureError(f"party {i} sent {len(msgs)} messages on an ideal-sum round")
        acc = add_vectors(acc, msgs[0])
    if acc is None:
        return ()
    return (vector_message(acc[1], acc[0]),)


def deliver(kind: ChannelKind, per_party: Sequence[Sequence[Message]], ell: int) -> tuple[Message, ...]:
    if kind is ChannelKind.SHUFFLE:
        return shuffle_round(per_party, ell)
    if kind is ChannelKind.PUBLIC:
        return public_round(per_party)
    return ideal_sum_round(per_party)


# ---------------------------------------------------------------------------
# Execution


def party_stream(seed: int, party: int, rnd: int) -> RandomStream:
    return RandomStream.from_seed(seed, "party", party, "round", rnd)


def public_randomness(seed: int, length: int) -> bytes:
    if length <= 0:
        return b""
    v = RandomStream.from_seed(seed, "public").bits(length)
    return v.to_bytes((length + 7) // 8, "big")


@dataclass(frozen=True)
class Transcript:
    protocol: str
    n: int
    w: bytes
    inputs: tuple
    party_randomness: tuple[tuple[bytes, ...], ...]  # [party][round]
    channel_outputs: tuple[tuple[Message, ...], ...]
    outcome: Any

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "protocol": self.protocol,
            "n": self.n,
            "w": self.w.hex(),
            "inputs": jsonable(self.inputs),
            "party_randomness": [[r.hex() for r in rs] for rs in self.party_randomness],
            "channel_outputs": [[m.hex() for m in s] for s in self.channel_outputs],
            "outcome": jsonable(self.outcome),
        }

    def serialize(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def jsonable(obj: Any) -> Any:
    """Deterministic JSON-compatible rendering of protocol values."""
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, bytes):
        return obj.hex()
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "__index__") and not isinstance(obj, bool):
        return int(obj)
    return obj


def _check_inputs(spec: ProtocolSpec, inputs: Sequence[Any]) -> tuple:
    if len(inputs) != spec.n:
        raise ProtocolStructureError(f"expected {spec.n} inputs, got {len(inputs)}")
    return tuple(inputs)


def run_protocol(spec: ProtocolSpec, inputs: Sequence[Any], seed: int, w: bytes | None = None) -> Transcript:
    """Execute ``spec`` on ``inputs``; a pure function of its arguments."""
    inputs = _check_inputs(spec, inputs)
    if w is None:
        w = public_randomness(seed, spec.public_randomness_length)
    states: list[Any] = [None] * spec.n
    records: list[list[bytes]] = [[] for _ in range(spec.n)]
    outputs: list[tuple[Message, ...]] = []
    for j, rs in enumerate(spec.rounds):
        history = tuple(outputs)
        per_party = []
        for i, rz in enumerate(spec.randomizers):
            ctx = Context(i, spec.n, j, w, inputs[i], history, states[i], spec.setup)
            step = rz.sample(ctx, party_stream(seed, i, j))
            states[i] = step.state
            records[i].append(step.record)
            per_party.append(step.messages)
        outputs.append(deliver(rs.kind, per_party, rs.messages_per_party))
    outcome = spec.analyzer(w, tuple(outputs), spec.setup)
    return Transcript(spec.name, spec.n, w, inputs, tuple(tuple(r) for r in records), tuple(outputs), outcome)


def replay_steps(spec: ProtocolSpec, t: Transcript, party: int) -> list[Step]:
    """Rebuild one party's steps (messages and state) from its recorded randomness."""
    state = None
    steps = []
    for j in range(spec.r):
        ctx = Context(party, spec.n, j, t.w, t.inputs[party], t.channel_outputs[:j], state, spec.setup)
        step = spec.randomizers[party].replay(ctx, t.party_randomness[party][j])
        state = step.state
        steps.append(step)
    return steps


def replay_outcome(spec: ProtocolSpec, t: Transcript) -> Any:
    """Recompute the outcome by replaying every party's record through the channels."""
    per_round: list[list[tuple[Message, ...]]] = [[] for _ in range(spec.r)]
    outputs: list[tuple[Message, ...]] = []
    states: list[Any] = [None] * spec.n
    for j, rs in enumerate(spec.rounds):
        for i, rz in enumerate(spec.randomizers):
            ctx = Context(i, spec.n, j, t.w, t.inputs[i], tuple(outputs), states[i], spec.setup)
            step = rz.replay(ctx, t.party_randomness[i][j])
            states[i] = step.state
            per_round[j].append(step.messages)
        outputs.append(deliver(rs.kind, per_round[j], rs.messages_per_party))
    return spec.analyzer(t.w, tuple(outputs), spec.setup)


# ---------------------------------------------------------------------------
# Coalition views


@dataclass(frozen=True)
class CoalitionView:
    w: bytes
    coalition: tuple[int, ...]
    inputs: tuple
    randomness: tuple[tuple[bytes, ...], ...]
    channel_outputs: tuple[tuple[Message, ...], ...]

    def encode(self) -> bytes:
        """Canonical byte encoding; equal views encode identically."""
        return encode_tuple((
            "view",
            self.w,
            self.coalition,
            self.inputs,
            self.randomness,
            self.channel_outputs,
        ))

    def to_dict(self) -> dict:
        return {
            "w": self.w.hex(),
            "coalition": list(self.coalition),
            "inputs": jsonable(self.inputs),
            "randomness": [[r.hex() for r in rs] for rs in self.randomness],
            "channel_outputs": [[m.hex() for m in s] for s in self.channel_outputs],
        }


def coalition_view(t: Transcript, coalition: Sequence[int]) -> CoalitionView:
    members = tuple(sorted(set(coalition)))
    for i in members:
        if not 0 <= i < t.n:
            raise ValueError(f"party {i} is not in [0, {t.n})")
    return CoalitionView(
        t.w,
        members,
        tuple(t.inputs[i] for i in members),
        tuple(t.party_randomness[i] for i in members),
        t.channel_outputs,
    )
