"""Two-round common-element protocol with message complexity one.

Round 1 (public channel): every party hashes its input with a public
pairwise-independent hash into [R] and reports y_i = h(x_i) through a
histogram plug-in. Round 2 (shuffle): if the largest estimate D(y*) reaches
98n/100, parties with y_i = y* send x_i with probability 1/2 and everyone
else sends the bottom message; otherwise everyone sends bottom and the
analyzer abstains.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ..encoding import BOTTOM, Tag, decode_message, encode_message, is_bottom
from ..histograms import FULL_RANGE_CAP, ExactHistogram, HistogramPlugin, Oracle
from ..model import ChannelKind, Context, ProtocolSpec, Randomizer, RoundSpec, public_randomness, run_protocol
from ..primitives import AffineHash, sample_pairwise_hash
from ..randomness import Bernoulli, RandomStream, derive_key, threshold64
from .outcome import ElementOutcome

HALF = Fraction(1, 2)
PUBLIC_BITS = 256


def threshold(n: int) -> Fraction:
    return Fraction(98 * n, 100)


def hash_range(n: int, delta: float, cap: int | None) -> int:
    R = math.ceil(n * n / delta)
    return R if cap is None else min(R, cap)


def public_hash(w: bytes, domain_size: int, R: int) -> AffineHash:
    return sample_pairwise_hash(domain_size, R, RandomStream(derive_key(w, "element-hash")))


def element_message(x: int) -> bytes:
    return encode_message(Tag.ELEMENT, x)


def most_frequent(messages: Iterable[bytes]) -> ElementOutcome:
    """Most frequent non-bottom element, smallest on ties; FAIL if all are bottom."""
    counts = Counter(decode_message(m)[1][0] for m in messages if not is_bottom(m))
    if not counts:
        return ElementOutcome.fail()
    top = max(counts.values())
    return ElementOutcome.found(min(x for x, c in counts.items() if c == top))


@dataclass(frozen=True)
class TwoRoundSetup:
    n: int
    domain_size: int
    R: int
    histogram: HistogramPlugin
    candidates: str  # "full" or "domain"

    def candidate_set(self, h: AffineHash) -> list[int] | None:
        if self.candidates == "full":
            return None
        return sorted({h(x) for x in range(self.domain_size)})


class _OracleCache:
    """Round-2 oracle shared by every party of one execution.

    All parties see the same history object, so identity is a safe key. The
    entry is replaced in one assignment, so concurrent executions at worst
    recompute.
    """

    def __init__(self):
        self._entry = None

    def get(self, setup: TwoRoundSetup, w: bytes, messages: tuple[bytes, ...]):
        entry = self._entry
        if entry is not None and entry[0] is messages and entry[1] == w:
            return entry[2]
        h = public_hash(w, setup.domain_size, setup.R)
        oracle = setup.histogram.oracle_from_messages(w, messages, setup.n, setup.R)
        ystar, best = oracle.argmax(setup.candidate_set(h))
        val = (h, oracle, ystar, best)
        self._entry = (messages, w, val)
        return val


class TwoRoundRandomizer(Randomizer):
    counts = (1, 1)

    def __init__(self, setup: TwoRoundSetup, cache: _OracleCache):
        self.setup = setup
        self.cache = cache

    def body(self, ctx: Context):
        s = self.setup
        if ctx.round == 0:
            h = public_hash(ctx.w, s.domain_size, s.R)
            msg = yield from s.histogram.party_body(ctx, h(ctx.x), s.n, s.R)
            return (msg,)
        h, _, ystar, best = self.cache.get(s, ctx.w, ctx.history[0])
        if best < threshold(s.n) or h(ctx.x) != ystar:
            return (BOTTOM,)
        send = yield Bernoulli(HALF)
        return (element_message(ctx.x) if send else BOTTOM,)


def common_two_round_spec(n: int, domain_size: int, epsilon: float, delta: float,
                          histogram: HistogramPlugin | None = None, range_cap: int | None = FULL_RANGE_CAP,
                          candidates: str | None = None) -> ProtocolSpec:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n < 2:
        raise ValueError("need at least two parties")
    histogram = histogram or ExactHistogram()
    R = hash_range(n, delta, range_cap)
    if candidates is None:
        candidates = "full" if R <= FULL_RANGE_CAP else "domain"
    setup = TwoRoundSetup(n, domain_size, R, histogram, candidates)
    cache = _OracleCache()
    rz = TwoRoundRandomizer(setup, cache)

    def analyzer(w, outputs, _setup):
        _, _, _, best = cache.get(setup, w, outputs[0])
        if best < threshold(n):
            return ElementOutcome.bottom()
        return most_frequent(outputs[1])

    return ProtocolSpec(
        name="common-two-round",
        n=n,
        rounds=(RoundSpec(ChannelKind.PUBLIC), RoundSpec(ChannelKind.SHUFFLE)),
        randomizers=(rz,) * n,
        analyzer=analyzer,
        public_randomness_length=PUBLIC_BITS,
        setup=setup,
        params={"n": n, "domain_size": domain_size, "epsilon": epsilon, "delta": delta, "R": R,
                "histogram": histogram.name, "candidates": candidates},
    )


def common_two_round(inputs: Sequence[int], domain_size: int, epsilon: float, delta: float, seed: int,
                     histogram: HistogramPlugin | None = None, range_cap: int | None = FULL_RANGE_CAP
                     ) -> tuple[ElementOutcome, ProtocolSpec]:
    spec = common_two_round_spec(len(inputs), domain_size, epsilon, delta, histogram, range_cap)
    return run_protocol(spec, inputs, seed).outcome, spec


def two_round_vectorized(inputs: Sequence[int] | np.ndarray, domain_size: int, epsilon: float, delta: float,
                         seed: int, histogram: HistogramPlugin | None = None,
                         range_cap: int | None = FULL_RANGE_CAP, candidates: str | None = None
                         ) -> tuple[ElementOutcome, Oracle]:
    """Same protocol, simulated with numpy for large n. Returns (outcome, round-1 oracle)."""
    xs = np.asarray(inputs, dtype=np.int64)
    n = xs.shape[0]
    histogram = histogram or ExactHistogram()
    R = hash_range(n, delta, range_cap)
    if candidates is None:
        candidates = "full" if R <= FULL_RANGE_CAP else "domain"
    setup = TwoRoundSetup(n, domain_size, R, histogram, candidates)
    w = public_randomness(seed, PUBLIC_BITS)
    h = public_hash(w, domain_size, R)
    uniq, inv = np.unique(xs, return_inverse=True)
    ys = np.array([h(int(u)) for u in uniq], dtype=np.int64)[inv]
    g = RandomStream.from_seed(seed, "vectorized").numpy()
    oracle = histogram.oracle_vectorized(ys, w, g, R)
    ystar, best = oracle.argmax(setup.candidate_set(h))
    if best < threshold(n):
        return ElementOutcome.bottom(), oracle
    coins = g.bit_generator.random_raw(n) < np.uint64(threshold64(HALF))
    sent = xs[(ys == ystar) & coins]
    if sent.size == 0:
        return ElementOutcome.fail(), oracle
    vals, cnt = np.unique(sent, return_counts=True)
    return ElementOutcome.found(int(vals[cnt == cnt.max()].min())), oracle
