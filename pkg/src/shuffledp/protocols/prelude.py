"""One-round common-element protocol built on a zero-coordinate vector sum.

Each party contributes z_i in Z_q^|X|:

* with probability 1/4 it sits out (z_i = 0);
* otherwise every coordinate other than its own input is uniform, and its
  own coordinate is 0, except with probability 1/(6n) when it is uniform too.

The analyzer outputs x when z = sum z_i has exactly one zero coordinate x.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..encoding import decode_tuple
from ..model import Context, ProtocolSpec, Transcript, run_protocol
from ..primitives import (
    DEFAULT_SIGMA,
    VectorRandomizer,
    channel_sum,
    share_count,
    smallest_prime_at_least,
    summation_round,
)
from ..randomness import Bernoulli, RandomStream, Uniform, threshold64
from .outcome import ElementOutcome

PARTICIPATE = Fraction(3, 4)


def noise_probability(n: int) -> Fraction:
    return Fraction(1, 6 * n)


def default_modulus(domain_size: int, factor: int = 16) -> int:
    return smallest_prime_at_least(factor * domain_size)


def check_modulus(q: int, bound: int, audit: bool) -> None:
    if q < 2:
        raise ValueError("modulus must be at least 2")
    if q < bound:
        msg = f"modulus {q} is below {bound}; the accidental-zero bound no longer holds"
        if not audit:
            raise ValueError(msg + " (pass audit=True to allow it)")
        warnings.warn(msg, stacklevel=3)


def prelude_vector_body(d: int, q: int, n: int):
    noise = noise_probability(n)

    def body(ctx: Context):
        xi = ctx.x
        if not 0 <= xi < d:
            raise ValueError(f"input {xi} outside [0, {d})")
        z = [0] * d
        if not (yield Bernoulli(PARTICIPATE)):
            return z
        for x in range(d):
            if x != xi:
                z[x] = yield Uniform(q)
        if (yield Bernoulli(noise)):
            z[xi] = yield Uniform(q)
        return z

    return body


def unique_zero(z: Sequence[int]) -> int | None:
    zeros = [x for x, v in enumerate(z) if v == 0]
    return zeros[0] if len(zeros) == 1 else None


@dataclass(frozen=True)
class PreludeParams:
    n: int
    domain_size: int
    q: int
    mode: str = "ideal"
    sigma: int = DEFAULT_SIGMA
    ell: int | None = None

    @property
    def shares(self) -> int:
        return self.ell if self.ell is not None else share_count(self.q, self.n, self.sigma)


def common_prelude_spec(n: int, domain_size: int, q: int | None = None, mode: str = "ideal",
                        sigma: int = DEFAULT_SIGMA, ell: int | None = None, audit: bool = False) -> ProtocolSpec:
    if domain_size < 1:
        raise ValueError("domain must be non-empty")
    if n < 1:
        raise ValueError("need at least one party")
    q = default_modulus(domain_size) if q is None else q
    check_modulus(q, 16 * domain_size, audit)
    p = PreludeParams(n, domain_size, q, mode, sigma, ell)
    shares = p.shares if mode == "shares" else 1
    rz = VectorRandomizer(prelude_vector_body(domain_size, q, n), q, domain_size, mode, shares)

    def analyzer(w, outputs, setup):
        x = unique_zero(channel_sum(outputs[0], mode, q, domain_size))
        return ElementOutcome.fail() if x is None else ElementOutcome.found(x)

    return ProtocolSpec(
        name="common-prelude",
        n=n,
        rounds=(summation_round(mode, shares, domain_size),),
        randomizers=(rz,) * n,
        analyzer=analyzer,
        params={"n": n, "domain_size": domain_size, "q": q, "mode": mode, "ell": shares, "sigma": sigma},
    )


def common_prelude(inputs: Sequence[int], domain_size: int, q: int | None = None, sigma: int = DEFAULT_SIGMA,
                   seed: int = 0, mode: str = "ideal", audit: bool = False) -> tuple[ElementOutcome, ProtocolSpec]:
    spec = common_prelude_spec(len(inputs), domain_size, q, mode, sigma, audit=audit)
    return run_protocol(spec, inputs, seed).outcome, spec


# ---------------------------------------------------------------------------
# Failure accounting

NOISE = "noise"
NOBODY = "nobody"
ACCIDENTAL = "accidental-zero"
WRONG = "wrong"


def party_flags(record: bytes, d: int) -> tuple[bool, bool]:
    """(participated, noise fired) read back from a party's recorded choices."""
    choices = decode_tuple(record)
    if not choices[0]:
        return False, False
    return True, bool(choices[d])


def classify_failure(t: Transcript, d: int, expected: int) -> str | None:
    """None on success; otherwise the first applicable cause."""
    out = t.outcome
    if out.status.value == "found" and out.element == expected:
        return None
    flags = [party_flags(r[0], d) for r in t.party_randomness]
    if any(noise for _, noise in flags):
        return NOISE
    if not any(part for part, _ in flags):
        return NOBODY
    if out.status.value == "found":
        return WRONG
    return ACCIDENTAL


def failure_bounds(n: int, d: int, q: int) -> dict[str, float]:
    return {NOISE: 1 / 8, NOBODY: 4.0 ** -n, ACCIDENTAL: d / q}


# ---------------------------------------------------------------------------
# Vectorized Monte Carlo engine


def _bernoulli(g: np.random.Generator, p: Fraction, shape) -> np.ndarray:
    raw = g.bit_generator.random_raw(int(np.prod(shape))).reshape(shape)
    return raw < np.uint64(threshold64(p))


def prelude_trials(inputs: Sequence[int], domain_size: int, q: int, trials: int, seed: int,
                   chunk: int = 5000) -> dict:
    """Simulate the ideal-sum protocol ``trials`` times with numpy.

    Returns per-status counts and failure-cause counts, with the same
    classification as :func:`classify_failure`. Expected output is the
    common input when all inputs agree, else None.
    """
    xs = np.asarray(inputs, dtype=np.int64)
    n = xs.shape[0]
    d = domain_size
    expected = int(xs[0]) if np.all(xs == xs[0]) else None
    counts = {"found": 0, "bottom": 0, "fail": 0, "correct": 0}
    causes = {NOISE: 0, NOBODY: 0, ACCIDENTAL: 0, WRONG: 0}
    own = np.arange(d)[None, None, :] == xs[None, :, None]
    done = 0
    block = 0
    while done < trials:
        T = min(chunk, trials - done)
        g = RandomStream.from_seed(seed, "prelude-trials", block).numpy()
        part = _bernoulli(g, PARTICIPATE, (T, n))
        noise = part & _bernoulli(g, noise_probability(n), (T, n))
        U = g.integers(0, q, size=(T, n, d), dtype=np.int64)
        mask = part[:, :, None] & (~own | noise[:, :, None])
        z = (U * mask).sum(axis=1) % q
        zero = z == 0
        nz = zero.sum(axis=1)
        found = nz == 1
        elem = zero.argmax(axis=1)
        counts["found"] += int(found.sum())
        counts["fail"] += int((~found).sum())
        if expected is not None:
            ok = found & (elem == expected)
            counts["correct"] += int(ok.sum())
            bad = ~ok
            any_noise = noise.any(axis=1)
            nobody = ~part.any(axis=1)
            causes[NOISE] += int((bad & any_noise).sum())
            causes[NOBODY] += int((bad & ~any_noise & nobody).sum())
            rest = bad & ~any_noise & ~nobody
            causes[WRONG] += int((rest & found).sum())
            causes[ACCIDENTAL] += int((rest & ~found).sum())
        done += T
        block += 1
    return {"trials": trials, "counts": counts, "causes": causes if expected is not None else {}}
