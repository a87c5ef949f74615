"""Seeded randomness and the draw vocabulary used by randomizer bodies.

Simulation randomness only: streams are keyed BLAKE2b in counter mode so
that every (master seed, party, round) triple gets its own reproducible
stream. Nothing here is meant to be cryptographically secure.

Randomizer logic is written once as a generator ("body") that yields draw
requests and returns its messages. :func:`sample_body` drives it with a
stream, :func:`enumerate_body` walks every branch with exact rational
weights, and :func:`replay_body` re-runs it from a recorded choice list.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Generator, Iterable, Sequence, Union

import mpmath
import numpy as np

from .encoding import encode_tuple, encode_value

_BLOCK = 64
_TWO64 = 1 << 64

Probability = Union[Fraction, float, int]


def derive_key(master: int | bytes, *labels: Any) -> bytes:
    """Keyed expansion of a master seed and a label path into a 32-byte key."""
    if isinstance(master, int):
        if master < 0:
            raise ValueError("seed must be non-negative")
        master = master.to_bytes(max(8, (master.bit_length() + 7) // 8), "big")
    h = hashlib.blake2b(encode_value(tuple(labels)), key=hashlib.sha256(master).digest(), digest_size=32)
    return h.digest()


class RandomStream:
    """Deterministic byte stream; all draws are exact or have bias below 2^-64."""

    __slots__ = ("_key", "_counter", "_buf", "_pos")

    def __init__(self, key: bytes):
        self._key = hashlib.sha256(key).digest() if len(key) > 64 else key
        self._counter = 0
        self._buf = b""
        self._pos = 0

    @classmethod
    def from_seed(cls, seed: int | bytes, *labels: Any) -> "RandomStream":
        return cls(derive_key(seed, *labels))

    def _refill(self) -> None:
        self._buf = hashlib.blake2b(self._counter.to_bytes(8, "big"), key=self._key, digest_size=_BLOCK).digest()
        self._counter += 1
        self._pos = 0

    def read(self, n: int) -> bytes:
        out = bytearray()
        while n > 0:
            if self._pos >= len(self._buf):
                self._refill()
            take = min(n, len(self._buf) - self._pos)
            out += self._buf[self._pos:self._pos + take]
            self._pos += take
            n -= take
        return bytes(out)

    def u64(self) -> int:
        return int.from_bytes(self.read(8), "big")

    def bits(self, k: int) -> int:
        """k independent uniform bits packed into an int (bit 0 first)."""
        if k <= 0:
            return 0
        raw = int.from_bytes(self.read((k + 7) // 8), "big")
        return raw & ((1 << k) - 1)

    def randbelow(self, q: int) -> int:
        """Exactly uniform integer in [0, q) by rejection."""
        if q < 1:
            raise ValueError("q must be positive")
        if q == 1:
            return 0
        k = (q - 1).bit_length()
        while True:
            v = self.bits(k)
            if v < q:
                return v

    def bernoulli(self, p: Probability) -> bool:
        return self.u64() < threshold64(p)

    def numpy(self) -> np.random.Generator:
        """A numpy generator seeded from this stream, for vectorized paths."""
        return np.random.Generator(np.random.PCG64(int.from_bytes(self.read(16), "big")))


def threshold64(p: Probability) -> int:
    """floor(p * 2^64), the fixed-point acceptance threshold for a coin of bias p."""
    if isinstance(p, float):
        p = Fraction(p)
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {p}")
    return (p.numerator * _TWO64) // p.denominator


def rr_keep_probability(epsilon: float) -> Fraction:
    """e^eps / (1 + e^eps) rounded down to the 2^-64 grid.

    Rounding down keeps the likelihood ratio at or below e^eps, so the
    nominal privacy level holds exactly for the represented mechanism, and
    the 64-bit sampler realizes exactly this probability.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    with mpmath.workdps(60):
        e = mpmath.e ** mpmath.mpf(epsilon)
        scaled = mpmath.floor(e / (1 + e) * _TWO64)
    return Fraction(int(scaled), _TWO64)


# ---------------------------------------------------------------------------
# Draw requests


@dataclass(frozen=True)
class Uniform:
    """Uniform integer in [0, q)."""

    q: int

    def branches(self) -> list[tuple[Fraction, int]]:
        w = Fraction(1, self.q)
        return [(w, v) for v in range(self.q)]

    def sample(self, stream: RandomStream) -> int:
        return stream.randbelow(self.q)


@dataclass(frozen=True)
class Bernoulli:
    """Coin returning 1 with probability p (exact rational in enumeration)."""

    p: Probability

    def _p(self) -> Fraction:
        return Fraction(self.p) if not isinstance(self.p, float) else Fraction(self.p)

    def branches(self) -> list[tuple[Fraction, int]]:
        p = self._p()
        out = []
        if p < 1:
            out.append((1 - p, 0))
        if p > 0:
            out.append((p, 1))
        return out

    def sample(self, stream: RandomStream) -> int:
        return int(stream.bernoulli(self._p()))


@dataclass(frozen=True)
class Bits:
    """k uniform bits packed into an int."""

    k: int

    def branches(self) -> list[tuple[Fraction, int]]:
        w = Fraction(1, 1 << self.k)
        return [(w, v) for v in range(1 << self.k)]

    def sample(self, stream: RandomStream) -> int:
        return stream.bits(self.k)


@dataclass(frozen=True)
class Choice:
    """Index drawn from a finite list of rational weights summing to 1."""

    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if sum(Fraction(w) for w in self.weights) != 1:
            raise ValueError("choice weights must sum to 1")

    def branches(self) -> list[tuple[Fraction, int]]:
        return [(Fraction(w), i) for i, w in enumerate(self.weights) if w]

    def sample(self, stream: RandomStream) -> int:
        u = stream.u64()
        acc = Fraction(0)
        for i, w in enumerate(self.weights):
            acc += Fraction(w)
            if u < threshold64(acc):
                return i
        return len(self.weights) - 1


Draw = Union[Uniform, Bernoulli, Bits, Choice]
Body = Callable[..., Generator[Draw, int, Any]]


def sample_body(body: Body, ctx: Any, stream: RandomStream) -> tuple[tuple[int, ...], Any]:
    """Run a body with fresh randomness; returns (choices, result)."""
    gen = body(ctx)
    choices: list[int] = []
    try:
        draw = next(gen)
        while True:
            v = draw.sample(stream)
            choices.append(v)
            draw = gen.send(v)
    except StopIteration as stop:
        return tuple(choices), stop.value


def replay_body(body: Body, ctx: Any, choices: Sequence[int]) -> Any:
    """Re-run a body feeding it a recorded choice sequence."""
    gen = body(ctx)
    try:
        draw = next(gen)
        for v in choices:
            draw = gen.send(v)
    except StopIteration as stop:
        return stop.value
    raise ValueError(f"recorded choices exhausted before body finished (pending {draw!r})")


def _advance(body: Body, ctx: Any, prefix: tuple[int, ...]):
    gen = body(ctx)
    try:
        draw = next(gen)
        for v in prefix:
            draw = gen.send(v)
    except StopIteration as stop:
        return True, stop.value
    return False, draw


def enumerate_body(body: Body, ctx: Any, limit: int | None = None) -> list[tuple[Fraction, tuple[int, ...], Any]]:
    """Every complete branch of a body as (probability, choices, result).

    Probabilities are exact rationals and sum to exactly 1.
    """
    out = []
    stack: list[tuple[Fraction, tuple[int, ...]]] = [(Fraction(1), ())]
    while stack:
        prob, prefix = stack.pop()
        done, value = _advance(body, ctx, prefix)
        if done:
            out.append((prob, prefix, value))
            if limit is not None and len(out) > limit:
                raise OverflowError(f"body has more than {limit} branches")
            continue
        for w, v in reversed(value.branches()):
            stack.append((prob * w, prefix + (v,)))
    return out


def record_of(choices: Iterable[int]) -> bytes:
    return encode_tuple(tuple(choices))
