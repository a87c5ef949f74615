"""Local-model frequency oracle (one-bit local hashing) and subsampling.

Party i holds y_i in [0, 2^m). Public randomness w fixes, per party, a
hash h_i(y) = (-1)^(popcount(a_i & y) xor b_i). The party publishes the
single bit c_i = h_i(y_i) * r_i where r_i = +1 with probability
e^eps / (e^eps + 1). The oracle answers

    D(y) = (e^eps + 1) / (e^eps - 1) * sum_i c_i h_i(y)

which is an unbiased count because h_i(y) h_i(y') has mean zero for y != y'.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping, Sequence

import mpmath
import numpy as np

from .encoding import Tag, decode_message, encode_message
from .model import Context
from .randomness import Bernoulli, RandomStream, Uniform, derive_key, rr_keep_probability, threshold64

FULL_RANGE_CAP = 10**6


def range_bits(R: int) -> int:
    return max(1, (R - 1).bit_length())


def debias_factor(epsilon: float) -> float:
    return (math.exp(epsilon) + 1) / math.expm1(epsilon)


@lru_cache(maxsize=16)
def local_hash_keys(w: bytes, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-party (a_i, b_i) expanded from the public string."""
    g = RandomStream(derive_key(w, "ldp-hash", n, m)).numpy()
    a = g.integers(0, 1 << m, size=n, dtype=np.int64)
    b = g.integers(0, 2, size=n, dtype=np.int64)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def local_hash_sign(a: int | np.ndarray, b: int | np.ndarray, y: int | np.ndarray):
    """h(y) in {-1, +1}."""
    parity = (np.bitwise_count(np.bitwise_and(a, y)) + b) & 1
    return 1 - 2 * parity.astype(np.int64)


def fwht(v: np.ndarray) -> np.ndarray:
    """out[y] = sum_a v[a] * (-1)^popcount(a & y); length must be a power of two."""
    n = v.shape[0]
    out = v.copy()
    h = 1
    while h < n:
        out = out.reshape(-1, 2, h)
        out = np.stack((out[:, 0, :] + out[:, 1, :], out[:, 0, :] - out[:, 1, :]), axis=1)
        h *= 2
    return out.reshape(n)


def _argmax_smallest(values: np.ndarray, labels: np.ndarray) -> tuple[int, float]:
    best = values.max()
    idx = labels[values == best].min()
    return int(idx), float(best)


class Oracle:
    """Common interface of frequency oracles used by the element protocols."""

    range_size: int

    def query(self, y: int) -> float:
        raise NotImplementedError

    def argmax(self, candidates: Iterable[int] | None = None) -> tuple[int, float]:
        raise NotImplementedError

    def to_report(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FrequencyOracle(Oracle):
    epsilon: float
    n: int
    m: int
    w: bytes
    bits: np.ndarray  # c_i in {-1, +1}
    range_size: int
    full_range_cap: int = FULL_RANGE_CAP

    def __post_init__(self):
        if self.bits.shape != (self.n,):
            raise ValueError("exactly one reported bit per party")

    def keys(self) -> tuple[np.ndarray, np.ndarray]:
        return local_hash_keys(self.w, self.n, self.m)

    def query(self, y: int) -> float:
        if not 0 <= y < self.range_size:
            raise ValueError(f"{y} is outside the oracle range")
        a, b = self.keys()
        s = int(np.dot(self.bits, local_hash_sign(a, b, y)))
        return debias_factor(self.epsilon) * s

    def query_many(self, ys: Sequence[int]) -> np.ndarray:
        a, b = self.keys()
        ys = np.asarray(ys, dtype=np.int64)
        out = np.empty(len(ys), dtype=np.float64)
        for start in range(0, len(ys), 256):
            chunk = ys[start:start + 256]
            signs = local_hash_sign(a[None, :], b[None, :], chunk[:, None])
            out[start:start + 256] = signs @ self.bits
        return out * debias_factor(self.epsilon)

    def query_all(self) -> np.ndarray:
        """D(y) for every y in the range, by one Walsh-Hadamard transform."""
        a, b = self.keys()
        u = np.zeros(1 << self.m, dtype=np.int64)
        np.add.at(u, a, self.bits * (1 - 2 * b))
        return fwht(u)[: self.range_size] * debias_factor(self.epsilon)

    def argmax(self, candidates: Iterable[int] | None = None) -> tuple[int, float]:
        if candidates is None:
            if self.range_size > self.full_range_cap:
                raise ValueError(
                    f"range {self.range_size} exceeds the full-scan cap {self.full_range_cap}; supply candidates")
            vals = self.query_all()
            return _argmax_smallest(vals, np.arange(self.range_size))
        cands = np.unique(np.asarray(list(candidates), dtype=np.int64))
        return _argmax_smallest(self.query_many(cands), cands)

    def to_report(self) -> dict:
        packed = np.packbits(self.bits > 0).tobytes()
        return {"kind": "ldp", "epsilon": self.epsilon, "n": self.n, "hash_bits": self.m,
                "hash_seed": self.w.hex(), "bits": packed.hex()}


@dataclass(frozen=True)
class CountOracle(Oracle):
    """Oracle answering from an explicit table; absent values count zero."""

    counts: Mapping[int, float]
    range_size: int
    kind: str = "exact"

    def query(self, y: int) -> float:
        return float(self.counts.get(y, 0))

    def argmax(self, candidates: Iterable[int] | None = None) -> tuple[int, float]:
        pool = set(self.counts) if candidates is None else set(candidates)
        if candidates is None and len(pool) < self.range_size:
            # some value in the range is absent and counts zero
            pool.add(min(set(range(len(pool) + 1)) - set(self.counts)))
        if not pool:
            return 0, 0.0
        best = max(self.query(y) for y in pool)
        return min(y for y in pool if self.query(y) == best), best

    def to_report(self) -> dict:
        return {"kind": self.kind, "counts": {str(k): v for k, v in sorted(self.counts.items())}}


# ---------------------------------------------------------------------------
# Mechanism and oracle construction


@dataclass(frozen=True)
class LdpMechanism:
    """The per-party two-point mechanism: keep the hash sign or flip it."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def keep(self) -> Fraction:
        """Realized keep probability on the 2^-64 grid."""
        return rr_keep_probability(self.epsilon)

    def ideal_keep(self, dps: int = 50):
        with mpmath.workdps(dps):
            e = mpmath.e ** mpmath.mpf(self.epsilon)
            return e / (1 + e)

    def likelihood_ratio(self, dps: int = 50):
        """max_v Pr[c = v | x] / Pr[c = v | x'] for the ideal mechanism."""
        with mpmath.workdps(dps):
            p = self.ideal_keep(dps)
            return max(p / (1 - p), (1 - p) / p)

    def realized_ratio(self) -> Fraction:
        p = self.keep
        return max(p / (1 - p), (1 - p) / p)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomStream):
        return rng.numpy()
    return np.random.default_rng(rng)


def sample_keep(rng: np.random.Generator, p: Fraction, size: int) -> np.ndarray:
    """Bernoulli(p) via 64-bit fixed-point thresholds, matching RandomStream.bernoulli."""
    thr = threshold64(p)
    if thr >= 1 << 64:
        return np.ones(size, dtype=bool)
    raw = rng.bit_generator.random_raw(size)
    return raw < np.uint64(thr)


def ldp_histogram(inputs: Sequence[int] | np.ndarray, epsilon: float, w: bytes, rng, domain_size: int,
                  full_range_cap: int = FULL_RANGE_CAP) -> FrequencyOracle:
    """Build the frequency oracle for ``inputs`` in [0, domain_size)."""
    mech = LdpMechanism(epsilon)
    ys = np.asarray(inputs, dtype=np.int64)
    if ys.size and (ys.min() < 0 or ys.max() >= domain_size):
        raise ValueError("inputs outside the domain")
    n = ys.shape[0]
    m = range_bits(domain_size)
    a, b = local_hash_keys(w, n, m)
    keep = sample_keep(_as_generator(rng), mech.keep, n)
    c = local_hash_sign(a, b, ys) * np.where(keep, 1, -1)
    return FrequencyOracle(epsilon, n, m, w, c.astype(np.int64), domain_size, full_range_cap)


def oracle_query(D: Oracle, y: int) -> float:
    return D.query(y)


def ldp_bit_message(c: int) -> bytes:
    return encode_message(Tag.LDP_BIT, 1 if c > 0 else 0)


def clear_message(y: int) -> bytes:
    return encode_message(Tag.CLEAR, y)


# ---------------------------------------------------------------------------
# Histogram plug-ins for two-round protocols


class HistogramPlugin:
    """How parties report y_i on the public channel and how the oracle is read back."""

    name = "abstract"

    def party_body(self, ctx: Context, y: int, n: int, R: int):
        raise NotImplementedError

    def oracle_from_messages(self, w: bytes, messages: Sequence[bytes], n: int, R: int) -> Oracle:
        raise NotImplementedError

    def oracle_vectorized(self, ys: np.ndarray, w: bytes, rng: np.random.Generator, R: int) -> Oracle:
        raise NotImplementedError


class LdpHistogram(HistogramPlugin):
    name = "real"

    def __init__(self, epsilon: float, full_range_cap: int = FULL_RANGE_CAP):
        self.mech = LdpMechanism(epsilon)
        self.epsilon = epsilon
        self.full_range_cap = full_range_cap

    def party_body(self, ctx: Context, y: int, n: int, R: int):
        a, b = local_hash_keys(ctx.w, n, range_bits(R))
        keep = yield Bernoulli(self.mech.keep)
        sign = int(local_hash_sign(int(a[ctx.party]), int(b[ctx.party]), y))
        return ldp_bit_message(sign if keep else -sign)

    def oracle_from_messages(self, w, messages, n, R):
        bits = np.array([1 if decode_message(msg)[1][0] else -1 for msg in messages], dtype=np.int64)
        return FrequencyOracle(self.epsilon, n, range_bits(R), w, bits, R, self.full_range_cap)

    def oracle_vectorized(self, ys, w, rng, R):
        return ldp_histogram(ys, self.epsilon, w, rng, R, self.full_range_cap)


class ExactHistogram(HistogramPlugin):
    """Parties publish y_i in the clear; the oracle is the true count table."""

    name = "exact"

    def party_body(self, ctx, y, n, R):
        return clear_message(y)
        yield  # pragma: no cover

    def _counts(self, ys: Iterable[int]) -> dict[int, float]:
        return dict(Counter(int(y) for y in ys))

    def oracle_from_messages(self, w, messages, n, R):
        return CountOracle(self._counts(decode_message(msg)[1][0] for msg in messages), R, self.name)

    def oracle_vectorized(self, ys, w, rng, R):
        vals, cnt = np.unique(np.asarray(ys), return_counts=True)
        return CountOracle({int(v): float(c) for v, c in zip(vals, cnt)}, R, self.name)


class InjectedHistogram(ExactHistogram):
    """Exact counts passed through a caller-supplied transform."""

    name = "injected"

    def __init__(self, transform: Callable[[dict[int, float], int], Mapping[int, float]] | None = None):
        self.transform = transform or (lambda counts, n: counts)

    def oracle_from_messages(self, w, messages, n, R):
        base = super().oracle_from_messages(w, messages, n, R)
        return CountOracle(dict(self.transform(dict(base.counts), n)), R, self.name)

    def oracle_vectorized(self, ys, w, rng, R):
        base = super().oracle_vectorized(ys, w, rng, R)
        return CountOracle(dict(self.transform(dict(base.counts), len(ys))), R, self.name)

    @classmethod
    def scaled(cls, factor: float) -> "InjectedHistogram":
        return cls(lambda counts, n: {y: c * factor for y, c in counts.items()})

    @classmethod
    def fixed(cls, table: Mapping[int, float]) -> "InjectedHistogram":
        return cls(lambda counts, n: dict(table))


# ---------------------------------------------------------------------------
# Central mechanisms and subsampling


class Mechanism:
    """A central randomized algorithm written as a draw-yielding body over all inputs."""

    n: int

    def body(self, inputs: tuple):
        raise NotImplementedError


class RandomizedResponse(Mechanism):
    """Binary randomized response applied to each input independently."""

    def __init__(self, epsilon: float, n: int = 1):
        self.epsilon = epsilon
        self.n = n
        self.keep = rr_keep_probability(epsilon)

    def body(self, inputs):
        out = []
        for x in inputs:
            kept = yield Bernoulli(self.keep)
            out.append(x if kept else 1 - x)
        return tuple(out)


class ConstantMechanism(Mechanism):
    """Ignores its inputs and outputs a fair coin."""

    def __init__(self, n: int = 1):
        self.n = n

    def body(self, inputs):
        return (yield Uniform(2))


def subsample_size(n: int, epsilon: float, eps_star: float) -> int:
    return math.ceil(n / epsilon * (3 + math.exp(eps_star)))


def unrank_combination(rank: int, t: int, n: int) -> tuple[int, ...]:
    """The rank-th n-subset of range(t) in lexicographic order."""
    out = []
    x = 0
    for left in range(n, 0, -1):
        while True:
            c = math.comb(t - x - 1, left - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


class SubsampledMechanism(Mechanism):
    def __init__(self, base: Mechanism, epsilon: float, eps_star: float, delta: float, t: int | None = None):
        if not 0 < epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        self.base = base
        self.epsilon = epsilon
        self.eps_star = eps_star
        self.t = subsample_size(base.n, epsilon, eps_star) if t is None else t
        if self.t < base.n:
            raise ValueError("subsample population smaller than the base mechanism's input count")
        self.n = self.t
        self.claimed_delta = 4 * epsilon * delta / (3 + math.exp(eps_star))

    def body(self, inputs):
        if len(inputs) < self.t:
            raise ValueError(f"need {self.t} inputs, got {len(inputs)}")
        rank = yield Uniform(math.comb(self.t, self.base.n))
        chosen = unrank_combination(rank, self.t, self.base.n)
        return (yield from self.base.body(tuple(inputs[i] for i in chosen)))


def subsample_amplify(base: Mechanism, epsilon: float, eps_star: float, delta: float = 0.0,
                      t: int | None = None) -> SubsampledMechanism:
    """Wrap ``base`` so it runs on a uniform size-n subset of t inputs.

    Passing ``t`` below the formula value is allowed for audits at toy scale.
    """
    return SubsampledMechanism(base, epsilon, eps_star, delta, t)
