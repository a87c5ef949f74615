"""Exact (ε, δ) audits over finite view distributions.

Views are enumerated with rational weights by a round-by-round dynamic
program that merges identical partial states. Hockey-stick divergences are
kept as the exact pair (A, B) with δ = A - e^ε·B, where A and B are the two
distributions' masses on the set where the likelihood ratio exceeds e^ε.
All audited outcome spaces are finite, so the hockey-stick sum captures the
quantifier over all events exactly.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import mpmath

from ..encoding import encode_tuple
from ..model import (
    ChannelKind,
    CoalitionView,
    Context,
    Emit,
    ProtocolSpec,
    ProtocolStructureError,
    read_vector,
    vector_message,
)
from ..randomness import enumerate_body, record_of
from .distributions import FiniteDistribution

DEFAULT_BUDGET = 10**8
MAX_ENUMERATED_W_BITS = 12
FINITE_SPACE_NOTE = "finite outcome spaces: the hockey-stick sum is exactly the least delta over all events"
_CLOSE = 1e-9
_DPS = 60


class BudgetExceeded(RuntimeError):
    """Exact enumeration would exceed the configured weighted-branch budget."""

    def __init__(self, count: int, budget: int, what: str = "enumeration"):
        super().__init__(f"{what} needs at least {count} weighted branches, budget is {budget}")
        self.count = count
        self.budget = budget


# ---------------------------------------------------------------------------
# Hockey-stick divergence


def _log_ratio_exceeds(p: Fraction, q: Fraction, epsilon: float) -> bool:
    """Exact test of p > e^ε·q for p, q ≥ 0."""
    if p == 0:
        return False
    if q == 0:
        return True
    if epsilon == 0:
        return p > q
    diff = (math.log(p.numerator) - math.log(p.denominator)) - (math.log(q.numerator) - math.log(q.denominator))
    if abs(diff - epsilon) > _CLOSE * max(1.0, abs(epsilon)):
        return diff > epsilon
    with mpmath.workdps(_DPS):
        lhs = mpmath.log(p.numerator) - mpmath.log(p.denominator) - mpmath.log(q.numerator) + mpmath.log(q.denominator)
        return bool(lhs > mpmath.mpf(epsilon))


@dataclass(frozen=True)
class Divergence:
    """One direction of the hockey-stick divergence: δ = A - e^ε·B."""

    A: Fraction
    B: Fraction
    epsilon: float

    @property
    def exact(self) -> Fraction | None:
        return self.A - self.B if self.epsilon == 0 else None

    @property
    def value(self) -> float:
        if self.epsilon == 0:
            return float(self.A - self.B)
        with mpmath.workdps(_DPS):
            v = mpmath.mpf(self.A.numerator) / self.A.denominator - mpmath.exp(mpmath.mpf(self.epsilon)) * (
                mpmath.mpf(self.B.numerator) / self.B.denominator)
            return min(1.0, max(0.0, float(v)))

    def to_dict(self) -> dict:
        return {"A": f"{self.A.numerator}/{self.A.denominator}", "B": f"{self.B.numerator}/{self.B.denominator}",
                "epsilon": self.epsilon, "delta": self.value}


def _exact_weights(d: FiniteDistribution | dict) -> dict:
    w = d.weights if isinstance(d, FiniteDistribution) else d
    return {k: Fraction(v) for k, v in w.items()}


def hockey_stick_one_way(p: FiniteDistribution, q: FiniteDistribution, epsilon: float) -> Divergence:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    pw, qw = _exact_weights(p), _exact_weights(q)
    A = Fraction(0)
    B = Fraction(0)
    for t, pt in pw.items():
        qt = qw.get(t, Fraction(0))
        if _log_ratio_exceeds(pt, qt, epsilon):
            A += pt
            B += qt
    return Divergence(A, B, float(epsilon))


def hockey_stick_exact(d0: FiniteDistribution, d1: FiniteDistribution, epsilon: float) -> Divergence:
    """The larger of the two directed divergences, as an exact (A, B) pair."""
    a = hockey_stick_one_way(d0, d1, epsilon)
    b = hockey_stick_one_way(d1, d0, epsilon)
    if a.value != b.value:
        return a if a.value > b.value else b
    if epsilon == 0:
        return a
    # Tie in float; compare exactly.
    with mpmath.workdps(_DPS):
        e = mpmath.exp(mpmath.mpf(epsilon))
        va = mpmath.mpf(a.A.numerator) / a.A.denominator - e * mpmath.mpf(a.B.numerator) / a.B.denominator
        vb = mpmath.mpf(b.A.numerator) / b.A.denominator - e * mpmath.mpf(b.B.numerator) / b.B.denominator
    return a if va >= vb else b


def hockey_stick_delta(d0: FiniteDistribution, d1: FiniteDistribution, epsilon: float) -> float:
    """Least δ making ``d0`` and ``d1`` (ε, δ)-close."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if d0.exact and d1.exact:
        return hockey_stick_exact(d0, d1, epsilon).value
    e = math.exp(epsilon)
    keys = set(d0.weights) | set(d1.weights)
    one = math.fsum(max(0.0, float(d0[k]) - e * float(d1[k])) for k in keys)
    two = math.fsum(max(0.0, float(d1[k]) - e * float(d0[k])) for k in keys)
    return min(1.0, max(one, two))


def total_variation(d0: FiniteDistribution, d1: FiniteDistribution):
    keys = set(d0.weights) | set(d1.weights)
    if d0.exact and d1.exact:
        return sum(abs(d0[k] - d1[k]) for k in keys) / 2
    return math.fsum(abs(float(d0[k]) - float(d1[k])) for k in keys) / 2


# ---------------------------------------------------------------------------
# View enumeration


def _hashable(state: Any) -> bool:
    try:
        hash(state)
    except TypeError:
        return False
    return True


def _split(result) -> tuple[tuple[bytes, ...], Any]:
    if isinstance(result, Emit):
        return tuple(result.messages), result.state
    return tuple(result), None


class _Aggregator:
    """Running channel output for one round while parties are folded in one at a time.

    Ideal-sum accumulators are group elements; small groups are indexed in
    mixed radix so that addition is a table lookup.
    """

    TABLE_LIMIT = 1024

    def __init__(self, kind: ChannelKind):
        self.kind = kind
        self.q: int | None = None
        self.d: int | None = None
        self.table: list[list[int]] | None = None

    def empty(self):
        return () if self.kind is not ChannelKind.IDEAL_SUM else None

    def prepare(self, msgs: tuple[bytes, ...]):
        """Channel-ready form of one party's messages."""
        if self.kind is not ChannelKind.IDEAL_SUM:
            return msgs
        if len(msgs) != 1:
            raise ProtocolStructureError("ideal-sum rounds carry exactly one message per party")
        q, v = read_vector(msgs[0])
        if self.q is None:
            self.q, self.d = q, len(v)
            if q ** len(v) <= self.TABLE_LIMIT:
                size = q ** len(v)
                self.table = [[self._index(tuple((x + y) % q for x, y in zip(self._digits(a), self._digits(b))))
                               for b in range(size)] for a in range(size)]
        elif (q, len(v)) != (self.q, self.d):
            raise ProtocolStructureError("ideal-sum vectors disagree on modulus or length")
        v = tuple(e % q for e in v)
        return self._index(v) if self.table is not None else v

    def _index(self, v: tuple[int, ...]) -> int:
        idx = 0
        for e in v:
            idx = idx * self.q + e
        return idx

    def _digits(self, idx: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            idx, r = divmod(idx, self.q)
            out.append(r)
        return tuple(reversed(out))

    def add(self, acc, item):
        if self.kind is ChannelKind.SHUFFLE:
            return tuple(sorted(acc + item))
        if self.kind is ChannelKind.PUBLIC:
            return acc + item
        if acc is None:
            return item
        if self.table is not None:
            return self.table[acc][item]
        return tuple((a + b) % self.q for a, b in zip(acc, item))

    def finish(self, acc) -> tuple[bytes, ...]:
        if self.kind is ChannelKind.IDEAL_SUM:
            if acc is None:
                return ()
            v = self._digits(acc) if self.table is not None else acc
            return (vector_message(v, self.q),)
        return acc


def _w_values(spec: ProtocolSpec, w: bytes | None) -> list[tuple[Fraction, bytes]]:
    L = spec.public_randomness_length
    if w is not None or L <= 0:
        return [(Fraction(1), b"" if w is None else w)]
    if L > MAX_ENUMERATED_W_BITS:
        raise BudgetExceeded(2**L, 2**MAX_ENUMERATED_W_BITS, "public-randomness enumeration (pass w= to fix it)")
    nbytes = (L + 7) // 8
    return [(Fraction(1, 2**L), v.to_bytes(nbytes, "big")) for v in range(2**L)]


def _integer_branches(branches: list[tuple[Fraction, bytes, tuple, Any]]) -> tuple[int, list]:
    """Rescale branch probabilities to integers over their least common denominator."""
    den = 1
    for p, *_ in branches:
        den = math.lcm(den, p.denominator)
    return den, [(p.numerator * (den // p.denominator), rec, msgs, st) for p, rec, msgs, st in branches]


def exact_view_distribution(spec: ProtocolSpec, inputs: Sequence[Any], coalition: Iterable[int] = (),
                            budget: int = DEFAULT_BUDGET, w: bytes | None = None,
                            factorize: bool = False) -> FiniteDistribution:
    """Exact distribution of the coalition's view, keyed by canonical view encodings.

    With ``factorize`` (one-round protocols only) the view is reduced to the
    public string and the aggregate of the non-coalition parties' messages.
    In one round the coalition's own records are independent of everyone
    else and identical across neighbouring inputs outside the coalition, so
    the reduction leaves every hockey-stick divergence unchanged.
    """
    inputs = tuple(inputs)
    if len(inputs) != spec.n:
        raise ProtocolStructureError(f"expected {spec.n} inputs, got {len(inputs)}")
    members = tuple(sorted(set(coalition)))
    for i in members:
        if not 0 <= i < spec.n:
            raise ValueError(f"party {i} is not in [0, {spec.n})")
    if factorize and spec.r != 1:
        raise ValueError("factorized views are defined for one-round protocols only")
    in_c = set(members)
    work = 0
    out: dict[bytes, Fraction] = {}

    for pw, wv in _w_values(spec, w):
        # Weights are integers over the running denominator ``den``.
        den = 1
        # node key (outputs, state keys, coalition records) -> [weight, party states]
        nodes: dict[tuple, list] = {((), (None,) * spec.n, ((),) * len(members)): [1, [None] * spec.n]}
        for j, rs in enumerate(spec.rounds):
            agg = _Aggregator(rs.kind)
            last = j == spec.r - 1
            partial: dict[tuple, list] = {}
            for (outputs, skeys, crec), (p, states) in nodes.items():
                partial[(outputs, skeys, crec, agg.empty())] = [p, list(states)]
            for i in range(spec.n):
                rz = spec.randomizers[i]
                keep_record = i in in_c and not factorize
                fold = not (factorize and i in in_c)
                cache: dict[tuple, tuple[int, list]] = {}
                # Every state in this round shares one branch denominator per context;
                # contexts can differ, so rescale to a common one for the party.
                contexts: list[tuple] = []
                for key, (p, states) in partial.items():
                    ck = (key[1][i], key[0])
                    if ck not in cache:
                        ctx = Context(i, spec.n, j, wv, inputs[i], key[0], states[i], spec.setup)
                        raw = []
                        for bp, choices, res in enumerate_body(rz.body, ctx):
                            msgs, st = _split(res)
                            if len(msgs) != rs.messages_per_party:
                                raise ProtocolStructureError(f"party {i} emitted {len(msgs)} messages in round {j}")
                            raw.append((bp, record_of(choices) if (keep_record or not last) else b"", msgs,
                                        st if not last else None))
                        if not keep_record and last:
                            merged: dict[tuple, Fraction] = {}
                            for bp, _, msgs, _ in raw:
                                merged[msgs] = merged.get(msgs, Fraction(0)) + bp
                            raw = [(bp, b"", msgs, None) for msgs, bp in merged.items()]
                        bden, ints = _integer_branches(raw)
                        cache[ck] = (bden, [(bw, rec, agg.prepare(msgs) if fold else None, st)
                                            for bw, rec, msgs, st in ints])
                        contexts.append(ck)
                pden = 1
                for ck in contexts:
                    pden = math.lcm(pden, cache[ck][0])
                den *= pden
                nxt: dict[tuple, list] = {}
                for key, (p, states) in partial.items():
                    outputs, skeys, crec, acc = key
                    bden, branches = cache[(skeys[i], outputs)]
                    scale = p * (pden // bden)
                    work += len(branches)
                    if work > budget:
                        raise BudgetExceeded(work, budget)
                    for bw, rec, item, st in branches:
                        nacc = agg.add(acc, item) if fold else acc
                        if last:
                            nskeys = skeys
                        else:
                            sk = st if _hashable(st) else (skeys[i], rec)
                            nskeys = skeys[:i] + (sk,) + skeys[i + 1:]
                        ncrec = crec
                        if keep_record:
                            pos = members.index(i)
                            ncrec = crec[:pos] + (crec[pos] + (rec,),) + crec[pos + 1:]
                        nk = (outputs, nskeys, ncrec, nacc)
                        slot = nxt.get(nk)
                        if slot is None:
                            if last:
                                nxt[nk] = [scale * bw, states]
                            else:
                                nstates = list(states)
                                nstates[i] = st
                                nxt[nk] = [scale * bw, nstates]
                        else:
                            slot[0] += scale * bw
                partial = nxt
            nodes = {}
            for (outputs, skeys, crec, acc), (p, states) in partial.items():
                nk = (outputs + (agg.finish(acc),), skeys, crec)
                slot = nodes.get(nk)
                if slot is None:
                    nodes[nk] = [p, states]
                else:
                    slot[0] += p
        for (outputs, _, crec), (p, _) in nodes.items():
            if factorize:
                enc = encode_tuple(("factorized-view", wv, members, outputs))
            else:
                enc = CoalitionView(wv, members, tuple(inputs[i] for i in members), crec, outputs).encode()
            out[enc] = out.get(enc, Fraction(0)) + pw * Fraction(p, den)
    return FiniteDistribution(out)


def branch_estimate(spec: ProtocolSpec, inputs: Sequence[Any], w: bytes = b"") -> int:
    """Unmerged first-round branch product; an upper bound on one-round work."""
    total = 1
    for i, rz in enumerate(spec.randomizers):
        ctx = Context(i, spec.n, 0, w, inputs[i], (), None, spec.setup)
        total *= len(enumerate_body(rz.body, ctx))
    return total


# ---------------------------------------------------------------------------
# Audits


def neighboring_pairs(domains: Sequence[Sequence[Any]], i: int) -> list[tuple[tuple, tuple]]:
    """Unordered i-neighbouring pairs: input vectors differing exactly at coordinate i."""
    rest = [d for k, d in enumerate(domains) if k != i]
    dom_i = list(domains[i])
    out = []
    for others in itertools.product(*rest):
        for a, b in itertools.combinations(range(len(dom_i)), 2):
            x = list(others[:i]) + [dom_i[a]] + list(others[i:])
            y = list(others[:i]) + [dom_i[b]] + list(others[i:])
            out.append((tuple(x), tuple(y)))
    return out


def coalition_family(n: int, exclude: int, cap: int, extra: Iterable[Iterable[int]] = ()) -> list[tuple[int, ...]]:
    others = [k for k in range(n) if k != exclude]
    fam = [c for t in range(min(cap, len(others)) + 1) for c in itertools.combinations(others, t)]
    for c in extra:
        c = tuple(sorted(set(c)))
        if exclude not in c and c not in fam:
            fam.append(c)
    return fam


@dataclass(frozen=True)
class AuditRow:
    party: int
    x0: tuple
    x1: tuple
    coalition: tuple[int, ...]
    divergences: tuple[Divergence, ...]

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(d.value for d in self.divergences)

    def to_dict(self) -> dict:
        return {"party": self.party, "x0": list(self.x0), "x1": list(self.x1), "coalition": list(self.coalition),
                "divergences": [d.to_dict() for d in self.divergences]}


def composed_delta(epsilon: float, delta_prime: float, delta_ideal: float) -> float:
    """End-to-end δ after replacing an ideal summation by a protocol with closeness δ'."""
    return (math.exp(epsilon) + 1) * delta_prime + delta_ideal


@dataclass
class AuditReport:
    protocol: str
    params: dict
    epsilons: tuple[float, ...]
    rows: list[AuditRow]
    coalition_cap: int
    view_mode: str
    metadata: dict = field(default_factory=dict)
    composition: dict | None = None

    def __post_init__(self):
        if list(self.epsilons) != sorted(self.epsilons):
            raise ValueError("epsilon grid must be sorted ascending")

    def max_by_size(self) -> dict[int, list[float]]:
        """Largest δ per coalition size t, one value per grid ε."""
        out: dict[int, list[float]] = {}
        for r in self.rows:
            t = len(r.coalition)
            cur = out.setdefault(t, [0.0] * len(self.epsilons))
            out[t] = [max(a, b) for a, b in zip(cur, r.deltas)]
        return dict(sorted(out.items()))

    def max_delta(self) -> list[float]:
        return [max((r.deltas[k] for r in self.rows), default=0.0) for k in range(len(self.epsilons))]

    def compose(self, delta_prime: float, source: str) -> dict:
        """Attach the composed δ for an ideal-sum audit and return it."""
        deltas = self.max_delta()
        self.composition = {
            "delta_prime": delta_prime,
            "delta_prime_source": source,
            "composed": [composed_delta(e, delta_prime, d) for e, d in zip(self.epsilons, deltas)],
        }
        return self.composition

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "params": self.params,
            "epsilons": list(self.epsilons),
            "view_mode": self.view_mode,
            "coalition_cap": self.coalition_cap,
            "note": FINITE_SPACE_NOTE,
            "max_by_coalition_size": {str(t): v for t, v in self.max_by_size().items()},
            "max_delta": self.max_delta(),
            "rows": [r.to_dict() for r in self.rows],
            "composition": self.composition,
            "metadata": self.metadata,
        }


def dp_audit(spec: ProtocolSpec, domains: Sequence[Sequence[Any]] | Sequence[Any], epsilons: Sequence[float],
             coalition_cap: int = 2, extra_coalitions: Iterable[Iterable[int]] = (),
             parties: Iterable[int] | None = None, factorize: bool | None = None,
             budget: int = DEFAULT_BUDGET, w: bytes | None = None, workers: int = 1) -> AuditReport:
    """Exact δ for every party, neighbouring pair, coalition excluding that party, and grid ε.

    ``domains`` is one value list per party, or a single list shared by all.
    """
    eps = tuple(float(e) for e in epsilons)
    if list(eps) != sorted(eps) or any(e < 0 for e in eps):
        raise ValueError("epsilon grid must be non-negative and sorted ascending")
    if domains and not isinstance(domains[0], (list, tuple, range)):
        domains = [list(domains)] * spec.n
    if len(domains) != spec.n:
        raise ValueError(f"need {spec.n} domains, got {len(domains)}")
    if factorize is None:
        factorize = spec.r == 1
    extra = [tuple(c) for c in extra_coalitions]
    parties = range(spec.n) if parties is None else parties

    cells = []
    for i in parties:
        pairs = neighboring_pairs(domains, i)
        for coal in coalition_family(spec.n, i, coalition_cap, extra):
            for x0, x1 in pairs:
                cells.append((i, x0, x1, coal))

    cache: dict[tuple, FiniteDistribution] = {}

    def key(x, coal):
        # A factorized view depends only on the non-coalition inputs.
        if factorize:
            return coal, tuple(v if k not in coal else None for k, v in enumerate(x))
        return coal, x

    def view(x, coal):
        k = key(x, coal)
        d = cache.get(k)
        if d is None:
            d = exact_view_distribution(spec, x, coal, budget=budget, w=w, factorize=factorize)
            cache[k] = d
        return d

    def cell(c):
        i, x0, x1, coal = c
        d0, d1 = view(x0, coal), view(x1, coal)
        return AuditRow(i, x0, x1, coal, tuple(hockey_stick_exact(d0, d1, e) for e in eps))

    if workers > 1:
        # Warm distinct views first so threads never duplicate enumeration.
        needed = {}
        for c in cells:
            for x in (c[1], c[2]):
                needed.setdefault(key(x, c[3]), (x, c[3]))
        order = sorted(needed, key=repr)
        with ThreadPoolExecutor(workers) as ex:
            for k, d in zip(order, ex.map(lambda k: exact_view_distribution(
                    spec, needed[k][0], needed[k][1], budget=budget, w=w, factorize=factorize), order)):
                cache[k] = d
            rows = list(ex.map(cell, cells))
    else:
        rows = [cell(c) for c in cells]
    return AuditReport(spec.name, dict(spec.params), eps, rows, coalition_cap,
                       "factorized" if factorize else "full")


# ---------------------------------------------------------------------------
# Summation closeness and central mechanisms


def summation_delta(spec: ProtocolSpec, q: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    """Largest analyzer-view total variation between same-sum scalar input vectors of a summation protocol."""
    by_sum: dict[int, list[FiniteDistribution]] = {}
    for x in itertools.product(range(q), repeat=spec.n):
        inputs = tuple((v,) for v in x)
        by_sum.setdefault(sum(x) % q, []).append(exact_view_distribution(spec, inputs, (), budget=budget))
    worst = Fraction(0)
    for ds in by_sum.values():
        for a, b in itertools.combinations(ds, 2):
            worst = max(worst, total_variation(a, b))
    return worst


def mechanism_distribution(mech, inputs: Sequence[Any], limit: int | None = None) -> FiniteDistribution:
    """Exact output distribution of a central mechanism body."""
    out: dict = {}
    for p, _, res in enumerate_body(mech.body, tuple(inputs), limit):
        out[res] = out.get(res, Fraction(0)) + p
    return FiniteDistribution(out)


def audit_mechanism(mech, domain: Sequence[Any], epsilon: float, limit: int | None = None) -> Divergence:
    """Worst exact divergence of a central mechanism over all neighbouring inputs in ``domain``."""
    n = mech.n
    dists = {x: mechanism_distribution(mech, x, limit) for x in itertools.product(domain, repeat=n)}
    worst = Divergence(Fraction(0), Fraction(0), float(epsilon))
    for i in range(n):
        for x0, x1 in neighboring_pairs([list(domain)] * n, i):
            d = hockey_stick_exact(dists[x0], dists[x1], epsilon)
            if d.value > worst.value:
                worst = d
    return worst
