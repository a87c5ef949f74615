"""Single-input mechanism simulating one party's view of a one-round shuffle protocol.

The mechanism runs the chosen party's randomizer on the real input, fills
in every other party with a uniformly drawn input, shuffles all messages,
and keeps ℓ of them chosen without repetition. When the kept messages are
exactly the chosen party's own, the output has the same law as that
party's sorted message vector in a real run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

from ..histograms import unrank_combination
from ..model import ChannelKind, Context, Emit, ProtocolSpec
from ..randomness import RandomStream, Uniform, enumerate_body, sample_body
from .distributions import JointDistribution
from .infotheory import mutual_information

MAX_ENUMERATED_W_BITS = 12


@dataclass(frozen=True)
class LocalOutput:
    messages: tuple[bytes, ...]  # the ℓ kept messages, sorted
    w: bytes
    selected_own: bool  # the kept positions are exactly the party's own
    own: tuple[bytes, ...]  # the party's own sorted messages


def _messages(result) -> tuple[bytes, ...]:
    return tuple(result.messages if isinstance(result, Emit) else result)


class LocalRandomizer:
    def __init__(self, spec: ProtocolSpec, party: int, domain: Sequence[Any], seed: int = 0):
        if spec.r != 1 or spec.rounds[0].kind is not ChannelKind.SHUFFLE:
            raise ValueError("the reduction needs a protocol with exactly one shuffle round")
        if not 0 <= party < spec.n:
            raise ValueError(f"party {party} is not in [0, {spec.n})")
        self.spec = spec
        self.party = party
        self.domain = tuple(domain)
        self.ell = spec.rounds[0].messages_per_party
        self.seed = seed

    def _ctx(self, j: int, x: Any, w: bytes) -> Context:
        return Context(j, self.spec.n, 0, w, x, (), None, self.spec.setup)

    def body(self, arg: tuple[Any, bytes]):
        x, w = arg
        n, ell, i = self.spec.n, self.ell, self.party
        bundles: list[tuple[bytes, ...]] = [()] * n
        bundles[i] = tuple(sorted(_messages((yield from self.spec.randomizers[i].body(self._ctx(i, x, w))))))
        for j in range(n):
            if j == i:
                continue
            xj = self.domain[(yield Uniform(len(self.domain)))]
            bundles[j] = tuple(sorted(_messages((yield from self.spec.randomizers[j].body(self._ctx(j, xj, w))))))
        pool = [(m, j) for j in range(n) for m in bundles[j]]
        for k in range(len(pool) - 1, 0, -1):
            s = yield Uniform(k + 1)
            pool[k], pool[s] = pool[s], pool[k]
        rank = yield Uniform(math.comb(len(pool), ell))
        picked = [pool[k] for k in unrank_combination(rank, len(pool), ell)]
        return LocalOutput(tuple(sorted(m for m, _ in picked)), w, all(o == i for _, o in picked), bundles[i])

    def _w(self, stream: RandomStream) -> bytes:
        L = self.spec.public_randomness_length
        if L <= 0:
            return b""
        return stream.bits(L).to_bytes((L + 7) // 8, "big")

    def sample(self, x: Any, trial: int = 0, w: bytes | None = None) -> LocalOutput:
        stream = RandomStream.from_seed(self.seed, "local-randomizer", self.party, trial)
        if w is None:
            w = self._w(stream)
        return sample_body(self.body, (x, w), stream)[1]

    def sample_uniform_input(self, trial: int) -> tuple[Any, LocalOutput]:
        """Draw Z uniformly from the domain and run the mechanism on it."""
        stream = RandomStream.from_seed(self.seed, "local-randomizer-input", self.party, trial)
        x = self.domain[stream.randbelow(len(self.domain))]
        return x, self.sample(x, trial)

    def enumerate(self, x: Any, w: bytes = b"", limit: int | None = None) -> list[tuple[Fraction, LocalOutput]]:
        return [(p, out) for p, _, out in enumerate_body(self.body, (x, w), limit)]

    def selection_probability(self, x: Any, w: bytes = b"") -> Fraction:
        return sum((p for p, out in self.enumerate(x, w) if out.selected_own), Fraction(0))


def local_randomizer_reduction(spec: ProtocolSpec, party: int, seed: int = 0,
                               domain: Sequence[Any] = (0, 1)) -> LocalRandomizer:
    return LocalRandomizer(spec, party, domain, seed)


def expected_selection_probability(n: int, ell: int) -> Fraction:
    return Fraction(1, math.comb(ell * n, ell))


def own_message_joint(spec: ProtocolSpec, party: int, domain: Sequence[Any], w: bytes | None = None) -> JointDistribution:
    """Exact joint of (sorted own messages, w, input) with the input uniform on ``domain``.

    Without a fixed ``w`` the public string is enumerated uniformly.
    """
    L = spec.public_randomness_length
    if w is not None or L <= 0:
        ws = [(Fraction(1), b"" if w is None else w)]
    elif L > MAX_ENUMERATED_W_BITS:
        raise ValueError("public randomness too long to enumerate; pass w")
    else:
        ws = [(Fraction(1, 2**L), v.to_bytes((L + 7) // 8, "big")) for v in range(2**L)]
    rz = spec.randomizers[party]
    pz = Fraction(1, len(domain))
    out: dict = {}
    for pw, wv in ws:
        for x in domain:
            ctx = Context(party, spec.n, 0, wv, x, (), None, spec.setup)
            for p, _, res in enumerate_body(rz.body, ctx):
                k = (tuple(sorted(_messages(res))), wv, x)
                out[k] = out.get(k, Fraction(0)) + pw * pz * p
    return JointDistribution(out)


def mi_reference(n: int, ell: int, epsilon: float, delta: float, domain_size: int) -> float:
    """Unit-constant reference (en)^ℓ(ε² + (δ/ε)log|X| + (δ/ε)log(ε/δ)) + ℓ·log(4en), in bits."""
    inner = epsilon**2
    if delta > 0:
        inner += delta / epsilon * (math.log2(domain_size) + math.log2(epsilon / delta))
    return (math.e * n) ** ell * inner + ell * math.log2(4 * math.e * n)


@dataclass(frozen=True)
class MiDiagnostic:
    measured: float
    reference: float
    params: dict
    non_binding: bool = True

    @property
    def ratio(self) -> float:
        return self.measured / self.reference if self.reference else math.inf

    def to_dict(self) -> dict:
        return {"measured_bits": self.measured, "reference_bits": self.reference, "ratio": self.ratio,
                "non_binding": self.non_binding, "params": self.params,
                "note": "reference uses unit constants; asymptotic shape only, never a pass/fail bound"}


def mi_diagnostic(spec: ProtocolSpec, party: int, domain: Sequence[Any], epsilon: float, delta: float,
                  w: bytes | None = None) -> MiDiagnostic:
    """Measured I(Y_i, W; Z_i) for uniform Z_i next to the reference formula."""
    if spec.r != 1:
        raise ValueError("the diagnostic is defined for one-round protocols")
    joint = own_message_joint(spec, party, domain, w)
    measured = max(0.0, mutual_information(joint, (0, 1), 2))
    ell = spec.rounds[0].messages_per_party
    ref = mi_reference(spec.n, ell, epsilon, delta, len(domain))
    return MiDiagnostic(measured, ref, {"n": spec.n, "ell": ell, "epsilon": epsilon, "delta": delta,
                                        "domain_size": len(domain), "party": party,
                                        "w_fixed": w is not None})

