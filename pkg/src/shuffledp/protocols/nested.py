"""Nested common element: one-round vector protocol and two-round composition.

The first floor(alpha*n) parties hold x_i in [|X|]; the rest hold vectors
y_i in [|Y|]^|X|. When the x-parties agree on x_1 and the y-parties agree at
coordinate x_1, the target answer is that common value y_i[x_1].

Cells of the one-round protocol's vector are indexed x*|Y| + y.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from ..encoding import decode_tuple
from ..histograms import ExactHistogram, HistogramPlugin
from ..model import ChannelKind, Context, ProtocolSpec, Randomizer, RoundSpec, Transcript, run_protocol
from ..primitives import (
    DEFAULT_SIGMA,
    VectorRandomizer,
    channel_sum,
    share_count,
    summation_round,
)
from ..randomness import Bernoulli, RandomStream, Uniform, derive_key
from .outcome import ElementOutcome, Status
from .prelude import (
    ACCIDENTAL,
    NOBODY,
    NOISE,
    PARTICIPATE,
    WRONG,
    _bernoulli,
    check_modulus,
    default_modulus,
    noise_probability,
)
from .two_round import FULL_RANGE_CAP, common_two_round_spec


@dataclass(frozen=True)
class NestedInput:
    xs: tuple[int, ...]
    ys: tuple[tuple[int, ...], ...]
    alpha: float
    x_size: int
    y_size: int

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        n = len(self.xs) + len(self.ys)
        if len(self.xs) != math.floor(self.alpha * n):
            raise ValueError(f"x-party count must be floor(alpha*n) = {math.floor(self.alpha * n)}")
        if not self.xs or not self.ys:
            raise ValueError("both party groups must be non-empty")
        if any(not 0 <= x < self.x_size for x in self.xs):
            raise ValueError("x-input outside the domain")
        for y in self.ys:
            if len(y) != self.x_size or any(not 0 <= v < self.y_size for v in y):
                raise ValueError("every y-vector needs |X| entries in [0, |Y|)")

    @property
    def n(self) -> int:
        return len(self.xs) + len(self.ys)

    @property
    def split(self) -> int:
        return len(self.xs)

    def party_inputs(self) -> tuple:
        return tuple(self.xs) + tuple(tuple(y) for y in self.ys)

    def target(self) -> int | None:
        """The value the analyzer must output, or None when unrestricted."""
        x1 = self.xs[0]
        if any(x != x1 for x in self.xs):
            return None
        vals = {y[x1] for y in self.ys}
        return vals.pop() if len(vals) == 1 else None

    @classmethod
    def valid(cls, n: int, alpha: float, x_size: int, y_size: int, rng: np.random.Generator,
              x1: int | None = None, answer: int | None = None) -> "NestedInput":
        """A random instance meeting the nested conditions."""
        split = math.floor(alpha * n)
        x1 = int(rng.integers(x_size)) if x1 is None else x1
        answer = int(rng.integers(y_size)) if answer is None else answer
        ys = rng.integers(0, y_size, size=(n - split, x_size))
        ys[:, x1] = answer
        return cls((x1,) * split, tuple(tuple(int(v) for v in row) for row in ys), alpha, x_size, y_size)


def nested_vector_body(split: int, x_size: int, y_size: int, q: int, n: int):
    noise = noise_probability(n)
    d = x_size * y_size

    def body(ctx: Context):
        z = [0] * d
        if not (yield Bernoulli(PARTICIPATE)):
            return z
        if ctx.party < split:
            xi = ctx.x
            for x in range(x_size):
                if x != xi:
                    for y in range(y_size):
                        z[x * y_size + y] = yield Uniform(q)
            if (yield Bernoulli(noise)):
                for y in range(y_size):
                    z[xi * y_size + y] = yield Uniform(q)
            return z
        yi = ctx.x
        for x in range(x_size):
            for y in range(y_size):
                if y != yi[x]:
                    z[x * y_size + y] = yield Uniform(q)
        if (yield Bernoulli(noise)):
            for x in range(x_size):
                z[x * y_size + yi[x]] = yield Uniform(q)
        return z

    return body


def zero_cell(z: Sequence[int], y_size: int) -> tuple[int, int] | None:
    zeros = [c for c, v in enumerate(z) if v == 0]
    if len(zeros) != 1:
        return None
    return divmod(zeros[0], y_size)


def nested_one_round_spec(n: int, alpha: float, x_size: int, y_size: int, q: int | None = None,
                          mode: str = "ideal", sigma: int = DEFAULT_SIGMA, ell: int | None = None,
                          audit: bool = False) -> ProtocolSpec:
    split = math.floor(alpha * n)
    if split < 1 or split >= n:
        raise ValueError("party split leaves one side empty")
    if n < 6 * max(1 / alpha, 1 / (1 - alpha)):
        warnings.warn("n is below 6*max(1/alpha, 1/(1-alpha)); the 3/4 success guarantee does not apply",
                      stacklevel=2)
    d = x_size * y_size
    q = default_modulus(d) if q is None else q
    check_modulus(q, 16 * d, audit)
    shares = (ell if ell is not None else share_count(q, n, sigma)) if mode == "shares" else 1
    rz = VectorRandomizer(nested_vector_body(split, x_size, y_size, q, n), q, d, mode, shares)

    def analyzer(w, outputs, setup):
        cell = zero_cell(channel_sum(outputs[0], mode, q, d), y_size)
        return ElementOutcome.fail() if cell is None else ElementOutcome.found(cell[1])

    return ProtocolSpec(
        name="nested-one-round",
        n=n,
        rounds=(summation_round(mode, shares, d),),
        randomizers=(rz,) * n,
        analyzer=analyzer,
        params={"n": n, "alpha": alpha, "x_size": x_size, "y_size": y_size, "q": q, "mode": mode,
                "ell": shares, "sigma": sigma, "split": split},
    )


def nested_one_round(inp: NestedInput, q: int | None = None, sigma: int = DEFAULT_SIGMA, seed: int = 0,
                     mode: str = "ideal", audit: bool = False) -> tuple[ElementOutcome, ProtocolSpec]:
    spec = nested_one_round_spec(inp.n, inp.alpha, inp.x_size, inp.y_size, q, mode, sigma, audit=audit)
    return run_protocol(spec, inp.party_inputs(), seed).outcome, spec


def _flags(record: bytes, split_party: bool, x_size: int, y_size: int) -> tuple[bool, bool]:
    choices = decode_tuple(record)
    if not choices[0]:
        return False, False
    # x-parties draw (|X|-1)|Y| cells before the noise coin; y-parties |X|(|Y|-1)
    k = (x_size - 1) * y_size if split_party else x_size * (y_size - 1)
    return True, bool(choices[1 + k])


def classify_nested_failure(t: Transcript, inp: NestedInput) -> str | None:
    expected = inp.target()
    out = t.outcome
    if out.status is Status.FOUND and out.element == expected:
        return None
    flags = [_flags(r[0], i < inp.split, inp.x_size, inp.y_size) for i, r in enumerate(t.party_randomness)]
    if any(nz for _, nz in flags):
        return NOISE
    if not any(p for p, _ in flags[: inp.split]) or not any(p for p, _ in flags[inp.split:]):
        return NOBODY
    return WRONG if out.status is Status.FOUND else ACCIDENTAL


def nested_failure_bounds(inp: NestedInput, q: int) -> dict[str, float]:
    split = inp.split
    d = inp.x_size * inp.y_size
    return {NOISE: 1 / 8, NOBODY: 4.0 ** -split + 4.0 ** -(inp.n - split), ACCIDENTAL: d / q}


def nested_trials(inp: NestedInput, q: int, trials: int, seed: int, chunk: int = 5000) -> dict:
    """Numpy simulation of the ideal-sum one-round protocol, with failure causes."""
    n, split = inp.n, inp.split
    X, Y = inp.x_size, inp.y_size
    d = X * Y
    cell_x = np.repeat(np.arange(X), Y)
    cell_y = np.tile(np.arange(Y), X)
    # selected[i, c]: cell c is the party's own (zero unless noise) cell
    selected = np.zeros((n, d), dtype=bool)
    for i, x in enumerate(inp.xs):
        selected[i] = cell_x == x
    for k, yv in enumerate(inp.ys):
        selected[split + k] = cell_y == np.asarray(yv)[cell_x]
    expected = inp.target()
    counts = {"found": 0, "bottom": 0, "fail": 0, "correct": 0}
    causes = {NOISE: 0, NOBODY: 0, ACCIDENTAL: 0, WRONG: 0}
    done = 0
    block = 0
    while done < trials:
        T = min(chunk, trials - done)
        g = RandomStream.from_seed(seed, "nested-trials", block).numpy()
        part = _bernoulli(g, PARTICIPATE, (T, n))
        noise = part & _bernoulli(g, noise_probability(n), (T, n))
        U = g.integers(0, q, size=(T, n, d), dtype=np.int64)
        mask = part[:, :, None] & (~selected[None] | noise[:, :, None])
        z = (U * mask).sum(axis=1) % q
        zero = z == 0
        found = zero.sum(axis=1) == 1
        elem = cell_y[zero.argmax(axis=1)]
        counts["found"] += int(found.sum())
        counts["fail"] += int((~found).sum())
        if expected is not None:
            ok = found & (elem == expected)
            counts["correct"] += int(ok.sum())
            bad = ~ok
            any_noise = noise.any(axis=1)
            nobody = ~part[:, :split].any(axis=1) | ~part[:, split:].any(axis=1)
            causes[NOISE] += int((bad & any_noise).sum())
            causes[NOBODY] += int((bad & ~any_noise & nobody).sum())
            rest = bad & ~any_noise & ~nobody
            causes[WRONG] += int((rest & found).sum())
            causes[ACCIDENTAL] += int((rest & ~found).sum())
        done += T
        block += 1
    return {"trials": trials, "counts": counts, "causes": causes if expected is not None else {}}


# ---------------------------------------------------------------------------
# Two-round composition


class CommonElementSub(Protocol):
    """A protocol solving the common element problem among a subset of parties."""

    name: str
    rounds: int

    def solve(self, inputs: Sequence[int], domain_size: int, seed: int) -> tuple[ElementOutcome, Transcript | None]:
        ...


class TwoRoundSub:
    """The two-round common-element protocol run by the designated parties."""

    rounds = 2

    def __init__(self, histogram: HistogramPlugin | None = None, epsilon: float = 1.0, delta: float = 1e-6,
                 range_cap: int | None = FULL_RANGE_CAP):
        self.histogram = histogram or ExactHistogram()
        self.epsilon = epsilon
        self.delta = delta
        self.range_cap = range_cap
        self.name = f"common-two-round/{self.histogram.name}"
        self._specs: dict[tuple[int, int], ProtocolSpec] = {}

    def spec(self, m: int, domain_size: int) -> ProtocolSpec:
        key = (m, domain_size)
        if key not in self._specs:
            self._specs[key] = common_two_round_spec(m, domain_size, self.epsilon, self.delta, self.histogram,
                                                     self.range_cap)
        return self._specs[key]

    def solve(self, inputs, domain_size, seed):
        t = run_protocol(self.spec(len(inputs), domain_size), list(inputs), seed)
        return t.outcome, t


class _HeavyHitterRandomizer(Randomizer):
    counts = (1,)

    def __init__(self, histogram: HistogramPlugin, m: int, R: int):
        self.histogram = histogram
        self.m = m
        self.R = R

    def body(self, ctx: Context):
        msg = yield from self.histogram.party_body(ctx, ctx.x, self.m, self.R)
        return (msg,)


class HeavyHitterSub:
    """One-round histogram protocol reporting the top element when its estimate clears a threshold.

    Parties report their value directly through the histogram plug-in.
    """

    rounds = 1

    def __init__(self, histogram: HistogramPlugin | None = None, threshold: float = 0.5):
        self.histogram = histogram or ExactHistogram()
        self.threshold = threshold
        self.name = f"heavy-hitter/{self.histogram.name}"

    def spec(self, m: int, domain_size: int) -> ProtocolSpec:
        hist = self.histogram
        rz = _HeavyHitterRandomizer(hist, m, domain_size)
        thr = self.threshold * m

        def analyzer(w, outputs, setup):
            oracle = hist.oracle_from_messages(w, outputs[0], m, domain_size)
            y, best = oracle.argmax(range(domain_size))
            return ElementOutcome.found(y) if best >= thr else ElementOutcome.bottom()

        return ProtocolSpec(
            name=self.name, n=m, rounds=(RoundSpec(ChannelKind.PUBLIC),), randomizers=(rz,) * m,
            analyzer=analyzer, public_randomness_length=256,
            params={"threshold": self.threshold, "histogram": hist.name},
        )

    def solve(self, inputs, domain_size, seed):
        t = run_protocol(self.spec(len(inputs), domain_size), list(inputs), seed)
        return t.outcome, t


@dataclass
class FixedOutcome:
    """Sub-protocol stub that returns a preset outcome and remembers what it was asked."""

    outcome: ElementOutcome
    name: str = "fixed"
    rounds: int = 1
    calls: list = field(default_factory=list)

    def solve(self, inputs, domain_size, seed):
        self.calls.append(tuple(inputs))
        return self.outcome, None


@dataclass(frozen=True)
class NestedTwoRoundResult:
    outcome: ElementOutcome
    first: ElementOutcome
    second: ElementOutcome | None
    transcripts: tuple[Transcript | None, ...]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.to_dict(),
            "first": self.first.to_dict(),
            "second": None if self.second is None else self.second.to_dict(),
            "transcripts": [None if t is None else t.to_dict() for t in self.transcripts],
        }


def nested_two_round(inp: NestedInput, seed: int, first: CommonElementSub | None = None,
                     second: CommonElementSub | None = None) -> NestedTwoRoundResult:
    """Find x_0 among the x-parties, then the common y_i[x_0] among the y-parties."""
    first = first or TwoRoundSub()
    second = second or first
    out1, t1 = first.solve(inp.xs, inp.x_size, _sub_seed(seed, 1))
    if out1.status is not Status.FOUND:
        return NestedTwoRoundResult(ElementOutcome.bottom(), out1, None, (t1,))
    x0 = out1.element
    column = [y[x0] for y in inp.ys]
    out2, t2 = second.solve(column, inp.y_size, _sub_seed(seed, 2))
    return NestedTwoRoundResult(out2, out1, out2, (t1, t2))


def _sub_seed(seed: int, stage: int) -> int:
    return int.from_bytes(derive_key(seed, "nested-two-round", stage)[:8], "big")
