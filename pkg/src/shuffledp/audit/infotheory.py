"""Entropy and mutual information in bits, computed from their definitions.

Conditional quantities are averages of per-slice entropies, and mutual
information is H(X) - H(X|Y); nothing here is derived through the chain
rules, so the chain rules can be tested against these functions.
"""

from __future__ import annotations

import math
from typing import Sequence

from .distributions import DistributionError, FiniteDistribution, JointDistribution

Axes = int | Sequence[int]


def _plogp(p) -> float:
    p = float(p)
    return 0.0 if p == 0 else -p * math.log2(p)


def entropy(d: FiniteDistribution) -> float:
    """H(X) = -sum p log2 p, with 0 log 0 = 0."""
    if not isinstance(d, FiniteDistribution):
        raise DistributionError("entropy needs a FiniteDistribution")
    return math.fsum(_plogp(p) for p in d.weights.values())


def joint_entropy(j: JointDistribution, axes: Axes | None = None) -> float:
    return entropy(j if axes is None else j.project(axes))


def conditional_entropy(j: JointDistribution, target: Axes = 0, given: Axes = 1) -> float:
    """H(target | given) = E_g[H(target | given = g)]."""
    if not isinstance(j, JointDistribution):
        raise DistributionError("conditional entropy needs a JointDistribution")
    return math.fsum(float(pg) * entropy(cond) for pg, cond in j.conditionals(given, target))


def mutual_information(j: JointDistribution, x: Axes = 0, y: Axes = 1) -> float:
    """I(X;Y) = H(X) - H(X|Y)."""
    return entropy(j.project(x)) - conditional_entropy(j, x, y)


def conditional_mi(j: JointDistribution, x: Axes = 0, y: Axes = 1, z: Axes = 2) -> float:
    """I(X;Y|Z) = E_z[H(X | Z = z) - H(X | Y, Z = z)]."""
    if not isinstance(j, JointDistribution):
        raise DistributionError("conditional mutual information needs a JointDistribution")
    x = (x,) if isinstance(x, int) else tuple(x)
    y = (y,) if isinstance(y, int) else tuple(y)
    z = (z,) if isinstance(z, int) else tuple(z)
    total = []
    for pz, slice_ in j.conditionals(z, x + y):
        sj = JointDistribution(dict(slice_.items()))
        kx = tuple(range(len(x)))
        ky = tuple(range(len(x), len(x) + len(y)))
        total.append(float(pz) * (entropy(sj.project(kx)) - conditional_entropy(sj, kx, ky)))
    return math.fsum(total)


def binary_entropy(p: float) -> float:
    return _plogp(p) + _plogp(1 - p)
