"""Finite distributions with exact rational or floating-point weights."""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import Any, Hashable, Iterable, Mapping, Sequence, Union

Weight = Union[Fraction, float]
FLOAT_TOL = 1e-12


class DistributionError(ValueError):
    pass


class FiniteDistribution:
    """Map from outcome to probability.

    Exact distributions hold only Fractions and sum to exactly 1; empirical
    ones hold floats summing to 1 within 1e-12. Zero-weight outcomes are
    dropped.
    """

    __slots__ = ("weights", "exact")

    def __init__(self, weights: Mapping[Hashable, Weight], normalize: bool = False):
        items = {k: v for k, v in weights.items() if v != 0}
        exact = all(isinstance(v, (Fraction, int)) for v in items.values())
        if exact:
            items = {k: Fraction(v) for k, v in items.items()}
        else:
            items = {k: float(v) for k, v in items.items()}
        if any(v < 0 for v in items.values()):
            raise DistributionError("negative weight")
        total = sum(items.values()) if exact else math.fsum(items.values())
        if normalize:
            if total == 0:
                raise DistributionError("cannot normalize an all-zero weight map")
            items = {k: v / total for k, v in items.items()}
        elif exact and total != 1:
            raise DistributionError(f"weights sum to {total}, not 1")
        elif not exact and abs(total - 1) > FLOAT_TOL:
            raise DistributionError(f"weights sum to {total!r}, not 1")
        self.weights = items
        self.exact = exact

    @classmethod
    def point(cls, outcome: Hashable) -> "FiniteDistribution":
        return cls({outcome: Fraction(1)})

    @classmethod
    def uniform(cls, outcomes: Iterable[Hashable]) -> "FiniteDistribution":
        outs = list(outcomes)
        return cls({o: Fraction(1, len(outs)) for o in outs})

    @classmethod
    def bernoulli(cls, p: Weight) -> "FiniteDistribution":
        return cls({1: p, 0: 1 - p})

    @classmethod
    def from_samples(cls, samples: Iterable[Hashable]) -> "FiniteDistribution":
        c = Counter(samples)
        n = sum(c.values())
        if n == 0:
            raise DistributionError("no samples")
        return cls({k: v / n for k, v in c.items()})

    def __getitem__(self, outcome: Hashable) -> Weight:
        return self.weights.get(outcome, Fraction(0) if self.exact else 0.0)

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def items(self):
        return self.weights.items()

    def support(self) -> set:
        return set(self.weights)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FiniteDistribution) and self.weights == other.weights

    def __repr__(self) -> str:
        kind = "exact" if self.exact else "empirical"
        return f"FiniteDistribution({kind}, {len(self.weights)} outcomes)"

    def map(self, f) -> "FiniteDistribution":
        """Push-forward through ``f``."""
        out: dict = {}
        for k, v in self.weights.items():
            key = f(k)
            out[key] = out.get(key, 0) + v
        return FiniteDistribution(out)


class JointDistribution(FiniteDistribution):
    """Distribution over fixed-arity tuples; axes are addressed by position."""

    __slots__ = ("arity",)

    def __init__(self, weights: Mapping[tuple, Weight], normalize: bool = False):
        super().__init__(weights, normalize)
        arities = {len(k) for k in self.weights}
        if len(arities) > 1 or any(not isinstance(k, tuple) for k in self.weights):
            raise DistributionError("joint outcomes must be tuples of one arity")
        self.arity = arities.pop() if arities else 0

    @classmethod
    def from_array(cls, table: Sequence) -> "JointDistribution":
        """Joint from a nested list or numpy array of probabilities indexed by outcome."""
        import numpy as np

        arr = np.asarray(table, dtype=float)
        return cls({tuple(int(i) for i in idx): float(v) for idx, v in np.ndenumerate(arr)}, normalize=True)

    @classmethod
    def product(cls, *parts: FiniteDistribution) -> "JointDistribution":
        out: dict = {(): Fraction(1) if all(p.exact for p in parts) else 1.0}
        for p in parts:
            out = {k + (o,): w * v for k, w in out.items() for o, v in p.items()}
        return cls(out)

    def _axes(self, axes: int | Sequence[int]) -> tuple[int, ...]:
        axes = (axes,) if isinstance(axes, int) else tuple(axes)
        if any(not 0 <= a < self.arity for a in axes):
            raise DistributionError(f"axis out of range for arity {self.arity}")
        return axes

    def project(self, axes: int | Sequence[int]) -> "JointDistribution":
        """Marginal over the given axes, kept as tuples."""
        ax = self._axes(axes)
        out: dict = {}
        for k, v in self.weights.items():
            key = tuple(k[a] for a in ax)
            out[key] = out.get(key, 0) + v
        return JointDistribution(out)

    def marginal(self, axis: int) -> FiniteDistribution:
        ax = self._axes(axis)[0]
        return self.project([ax]).map(lambda k: k[0])

    def conditionals(self, given: int | Sequence[int], target: int | Sequence[int]
                     ) -> list[tuple[Weight, FiniteDistribution]]:
        """[(Pr[G = g], distribution of the target axes given G = g)] over the support of G."""
        g_ax = self._axes(given)
        t_ax = self._axes(target)
        groups: dict[tuple, dict] = {}
        for k, v in self.weights.items():
            g = tuple(k[a] for a in g_ax)
            t = tuple(k[a] for a in t_ax)
            bucket = groups.setdefault(g, {})
            bucket[t] = bucket.get(t, 0) + v
        out = []
        for g in sorted(groups, key=repr):
            bucket = groups[g]
            pg = sum(bucket.values()) if self.exact else math.fsum(bucket.values())
            out.append((pg, FiniteDistribution({t: v / pg for t, v in bucket.items()}, normalize=not self.exact)))
        return out


def as_joint(d: FiniteDistribution) -> JointDistribution:
    return d if isinstance(d, JointDistribution) else JointDistribution({(k,): v for k, v in d.items()})


def key_of(outcome: Any) -> Any:
    return outcome
