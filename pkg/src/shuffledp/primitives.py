"""Group arithmetic over Z_q, hash families, and split-and-mix summation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence, Union

import gmpy2

from .encoding import Tag, decode_message, encode_message
from .model import (
    ChannelKind,
    Context,
    Emit,
    ProtocolSpec,
    Randomizer,
    RoundSpec,
    read_vector,
    run_protocol,
    vector_message,
)
from .randomness import Bits, RandomStream, Uniform


def smallest_prime_at_least(m: int) -> int:
    if m <= 2:
        return 2
    return int(gmpy2.next_prime(m - 1))


def ceil_log2(m: int) -> int:
    return (m - 1).bit_length() if m > 1 else 0


@dataclass(frozen=True)
class ZqElement:
    value: int
    q: int

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("modulus must be at least 2")
        if not 0 <= self.value < self.q:
            raise ValueError(f"{self.value} is not in [0, {self.q})")

    @classmethod
    def of(cls, value: int, q: int) -> "ZqElement":
        return cls(value % q, q)

    def _other(self, other: "ZqElement") -> int:
        if not isinstance(other, ZqElement):
            return NotImplemented
        if other.q != self.q:
            raise ValueError(f"modulus mismatch: {self.q} vs {other.q}")
        return other.value

    def __add__(self, other: "ZqElement") -> "ZqElement":
        return ZqElement((self.value + self._other(other)) % self.q, self.q)

    def __sub__(self, other: "ZqElement") -> "ZqElement":
        return ZqElement((self.value - self._other(other)) % self.q, self.q)

    def __neg__(self) -> "ZqElement":
        return ZqElement(-self.value % self.q, self.q)

    def __int__(self) -> int:
        return self.value


@dataclass(frozen=True)
class GroupVector:
    entries: tuple[int, ...]
    q: int

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("modulus must be at least 2")
        if any(not 0 <= e < self.q for e in self.entries):
            raise ValueError("entries must lie in [0, q)")

    @classmethod
    def of(cls, entries: Iterable[int], q: int) -> "GroupVector":
        return cls(tuple(int(e) % q for e in entries), q)

    @classmethod
    def zeros(cls, d: int, q: int) -> "GroupVector":
        return cls((0,) * d, q)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> ZqElement:
        return ZqElement(self.entries[i], self.q)

    def __add__(self, other: "GroupVector") -> "GroupVector":
        if other.q != self.q or len(other) != len(self):
            raise ValueError("vectors differ in modulus or length")
        return GroupVector(tuple((a + b) % self.q for a, b in zip(self.entries, other.entries)), self.q)


Groupish = Union[ZqElement, GroupVector]


def sample_uniform_group(q: int, rng: RandomStream) -> ZqElement:
    if q < 2:
        raise ValueError("modulus must be at least 2")
    return ZqElement(rng.randbelow(q), q)


def group_branches(q: int) -> list[tuple[Fraction, ZqElement]]:
    """Exact distribution of :func:`sample_uniform_group`."""
    if q < 2:
        raise ValueError("modulus must be at least 2")
    return [(p, ZqElement(v, q)) for p, v in Uniform(q).branches()]


# ---------------------------------------------------------------------------
# Hashing

HASH_SLACK_BITS = 40


@dataclass(frozen=True)
class AffineHash:
    """x -> ((a*x + b) mod p) mod R over a prime p much larger than the range."""

    p: int
    a: int
    b: int
    R: int
    domain: int

    def __call__(self, x: int) -> int:
        if not 0 <= x < self.domain:
            raise ValueError(f"{x} is outside the hash domain [0, {self.domain})")
        return ((self.a * x + self.b) % self.p) % self.R

    def describe(self) -> dict:
        return {"p": str(self.p), "a": str(self.a), "b": str(self.b), "R": str(self.R), "domain": str(self.domain)}


def hash_prime(domain_size: int, R: int) -> int:
    return smallest_prime_at_least(max(domain_size, R) << HASH_SLACK_BITS)


def sample_pairwise_hash(domain_size: int, R: int, rng: RandomStream) -> AffineHash:
    if domain_size < 1 or R < 1:
        raise ValueError("domain size and range must be positive")
    p = hash_prime(domain_size, R)
    return AffineHash(p, rng.randbelow(p), rng.randbelow(p), R, domain_size)


def hash_eval(h: AffineHash, x: int) -> int:
    return h(x)


def perfectly_hashes(h: Callable[[int], int], values: Iterable[int]) -> bool:
    seen = set()
    for v in values:
        y = h(v)
        if y in seen:
            return False
        seen.add(y)
    return True


@dataclass(frozen=True)
class ToeplitzHash:
    """x -> T x xor v over GF(2); T is the m x n Toeplitz matrix on ``diagonal``.

    Entry T[r][c] is bit (r - c + n - 1) of ``diagonal``. Bit c of an input
    int is coordinate c; bit r of the output is row r.
    """

    n_in: int
    m_out: int
    diagonal: int
    offset: int

    @classmethod
    def description_bits(cls, n_in: int, m_out: int) -> int:
        return (n_in + m_out - 1) + m_out

    @classmethod
    def from_bits(cls, n_in: int, m_out: int, bits: int) -> "ToeplitzHash":
        dlen = n_in + m_out - 1
        return cls(n_in, m_out, bits & ((1 << dlen) - 1), bits >> dlen)

    @classmethod
    def sample(cls, n_in: int, m_out: int, rng: RandomStream) -> "ToeplitzHash":
        return cls.from_bits(n_in, m_out, rng.bits(cls.description_bits(n_in, m_out)))

    def bits(self) -> int:
        return self.diagonal | (self.offset << (self.n_in + self.m_out - 1))

    def row(self, r: int) -> int:
        # bit c of the row is bit n-1-c of the n-bit diagonal window starting at r
        window = (self.diagonal >> r) & ((1 << self.n_in) - 1)
        return int(format(window, f"0{self.n_in}b")[::-1], 2)

    def __call__(self, x: int) -> int:
        out = 0
        for r in range(self.m_out):
            if bin(self.row(r) & x).count("1") & 1:
                out |= 1 << r
        return out ^ self.offset


# ---------------------------------------------------------------------------
# Split-and-mix summation

DEFAULT_SIGMA = 40


def share_count(q: int, n: int, sigma: int = DEFAULT_SIGMA) -> int:
    """Shares per coordinate: sigma + ceil(log2 q) + ceil(log2 n)."""
    return sigma + ceil_log2(q) + ceil_log2(max(n, 1))


def split_body(x: int, ell: int, q: int):
    shares = []
    for _ in range(ell - 1):
        shares.append((yield Uniform(q)))
    shares.append((x - sum(shares)) % q)
    return tuple(shares)


def ikos_split(x: ZqElement, ell: int, rng: RandomStream) -> tuple[ZqElement, ...]:
    if ell < 1:
        raise ValueError("share count must be at least 1")
    shares = [rng.randbelow(x.q) for _ in range(ell - 1)]
    shares.append((x.value - sum(shares)) % x.q)
    return tuple(ZqElement(s, x.q) for s in shares)


def share_message(coord: int, value: int) -> bytes:
    return encode_message(Tag.SHARE, coord, value)


def sum_shares(messages: Iterable[bytes], q: int, d: int) -> tuple[int, ...]:
    acc = [0] * d
    for m in messages:
        tag, (coord, value) = decode_message(m)
        if tag != Tag.SHARE:
            raise ValueError("not a share message")
        acc[coord] = (acc[coord] + value) % q
    return tuple(acc)


VectorBody = Callable[[Context], Any]


class VectorRandomizer(Randomizer):
    """Lifts a body producing a vector in Z_q^d into a summation round.

    ``mode='shares'`` splits every coordinate into ``ell`` additive shares
    sent through the shuffle; ``mode='ideal'`` sends the vector to the
    ideal-sum channel.
    """

    def __init__(self, vector_body: VectorBody, q: int, d: int, mode: str = "shares", ell: int = 1):
        if mode not in ("shares", "ideal"):
            raise ValueError(f"unknown summation mode {mode!r}")
        self.vector_body = vector_body
        self.q = q
        self.d = d
        self.mode = mode
        self.ell = ell
        self.counts = (d * ell,) if mode == "shares" else (1,)

    def body(self, ctx: Context):
        vec = yield from self.vector_body(ctx)
        vec = tuple(int(v) % self.q for v in vec)
        if len(vec) != self.d:
            raise ValueError(f"vector body produced {len(vec)} entries, expected {self.d}")
        if self.mode == "ideal":
            return Emit((vector_message(vec, self.q),), vec)
        msgs = []
        for c, v in enumerate(vec):
            shares = yield from split_body(v, self.ell, self.q)
            msgs.extend(share_message(c, s) for s in shares)
        return Emit(tuple(msgs), vec)


def summation_round(mode: str, ell: int, d: int) -> RoundSpec:
    if mode == "ideal":
        return RoundSpec(ChannelKind.IDEAL_SUM, 1)
    return RoundSpec(ChannelKind.SHUFFLE, d * ell)


def channel_sum(output: Sequence[bytes], mode: str, q: int, d: int) -> tuple[int, ...]:
    """Recover the summed vector from a summation round's channel output."""
    if mode == "ideal":
        if not output:
            return (0,) * d
        q2, v = read_vector(output[0])
        return v
    return sum_shares(output, q, d)


def _input_body(ctx: Context):
    return ctx.x
    yield  # pragma: no cover


def ikos_sum_spec(n: int, q: int, d: int = 1, sigma: int = DEFAULT_SIGMA, ell: int | None = None,
                  mode: str = "shares") -> ProtocolSpec:
    """One-round summation of per-party vectors in Z_q^d (inputs are int tuples)."""
    if ell is None:
        ell = share_count(q, n, sigma)
    rz = VectorRandomizer(_input_body, q, d, mode, ell)

    def analyzer(w, outputs, setup):
        return channel_sum(outputs[0], mode, q, d)

    return ProtocolSpec(
        name="ikos-sum",
        n=n,
        rounds=(summation_round(mode, ell, d),),
        randomizers=(rz,) * n,
        analyzer=analyzer,
        params={"q": q, "d": d, "ell": ell, "sigma": sigma},
    )


def ikos_sum_protocol(inputs: Sequence[Groupish], sigma: int = DEFAULT_SIGMA, seed: int = 0,
                      ell: int | None = None) -> tuple[Groupish, ProtocolSpec]:
    """Run split-and-mix summation; returns (sum, spec)."""
    if not inputs:
        raise ValueError("need at least one party")
    q = inputs[0].q
    if any(x.q != q for x in inputs):
        raise ValueError("all inputs must share one modulus")
    scalar = isinstance(inputs[0], ZqElement)
    vecs = [(x.value,) if isinstance(x, ZqElement) else x.entries for x in inputs]
    d = len(vecs[0])
    if any(len(v) != d for v in vecs):
        raise ValueError("all input vectors must have the same length")
    spec = ikos_sum_spec(len(inputs), q, d, sigma, ell)
    total = run_protocol(spec, vecs, seed).outcome
    return (ZqElement(total[0], q) if scalar else GroupVector(total, q)), spec
