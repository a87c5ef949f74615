"""Sampling-based diagnostics: TV estimates, binomial intervals, goodness of fit.

These are heuristics for cross-checking exact results, not privacy bounds.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy import stats

MIN_TRIALS = 1000
BOOTSTRAP_RESAMPLES = 1000
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class Interval:
    estimate: float
    low: float
    high: float
    level: float = 0.95

    def contains(self, v: float) -> bool:
        return self.low <= v <= self.high

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "low": self.low, "high": self.high, "level": self.level}


def _tv_counts(c0: np.ndarray, c1: np.ndarray, n0: int, n1: int) -> np.ndarray:
    return 0.5 * np.abs(c0 / n0 - c1 / n1).sum(axis=-1)


def tv_estimate(sampler0: Callable[[np.random.Generator], Hashable],
                sampler1: Callable[[np.random.Generator], Hashable], trials: int,
                seed: int = 0, resamples: int = BOOTSTRAP_RESAMPLES) -> Interval:
    """Plug-in total variation between two samplers with a percentile bootstrap interval."""
    if trials < MIN_TRIALS:
        raise ValueError(f"tv_estimate needs at least {MIN_TRIALS} trials")
    rng = np.random.default_rng(seed)
    s0 = [sampler0(rng) for _ in range(trials)]
    s1 = [sampler1(rng) for _ in range(trials)]
    return tv_from_samples(s0, s1, rng, resamples)


def tv_from_samples(s0: Sequence[Hashable], s1: Sequence[Hashable], rng: np.random.Generator | int = 0,
                    resamples: int = BOOTSTRAP_RESAMPLES) -> Interval:
    if len(s0) == 0 or len(s1) == 0:
        raise ValueError("degenerate sampler: no samples")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    k0, k1 = Counter(s0), Counter(s1)
    support = sorted(set(k0) | set(k1), key=repr)
    c0 = np.array([k0.get(k, 0) for k in support], dtype=float)
    c1 = np.array([k1.get(k, 0) for k in support], dtype=float)
    n0, n1 = len(s0), len(s1)
    est = float(_tv_counts(c0, c1, n0, n1))
    b0 = rng.multinomial(n0, c0 / n0, size=resamples)
    b1 = rng.multinomial(n1, c1 / n1, size=resamples)
    boot = _tv_counts(b0, b1, n0, n1)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return Interval(est, float(min(lo, est)), float(max(hi, est)))


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> Interval:
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=level, method="exact")
    return Interval(successes / trials, float(ci.low), float(ci.high), level)


@dataclass(frozen=True)
class ChiSquared:
    statistic: float
    dof: int
    p_value: float
    cells: int

    def passes(self, alpha: float = 1e-3) -> bool:
        return self.p_value >= alpha


def _merge_small(observed: np.ndarray, expected: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pool cells, smallest expected first, until every pooled cell expects at least 5."""
    order = np.argsort(expected, kind="stable")
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for k in order:
        o_acc += observed[k]
        e_acc += expected[k]
        if e_acc >= MIN_EXPECTED:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.array(obs_out), np.array(exp_out)


def chi_squared_gof(samples: Sequence[Hashable] | Mapping[Hashable, int],
                    probabilities: Mapping[Hashable, float]) -> ChiSquared:
    """Goodness of fit of samples against a known distribution.

    Outcomes outside the distribution's support give p = 0.
    """
    counts = Counter(samples) if not isinstance(samples, Mapping) else Counter(samples)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no samples")
    if any(k not in probabilities or probabilities[k] == 0 for k in counts):
        return ChiSquared(float("inf"), 0, 0.0, len(counts))
    keys = sorted(probabilities, key=repr)
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    exp = np.array([float(probabilities[k]) for k in keys]) * total
    obs, exp = _merge_small(obs, exp)
    if len(obs) < 2:
        return ChiSquared(0.0, 0, 1.0, len(obs))
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    return ChiSquared(stat, dof, float(stats.chi2.sf(stat, dof)), len(obs))


def chi_squared_homogeneity(s0: Sequence[Hashable], s1: Sequence[Hashable]) -> ChiSquared:
    """Two-sample test that both sample sets come from one distribution."""
    k0, k1 = Counter(s0), Counter(s1)
    keys = sorted(set(k0) | set(k1), key=repr)
    table = np.array([[k0.get(k, 0) for k in keys], [k1.get(k, 0) for k in keys]], dtype=float)
    pooled = table.sum(axis=0)
    # Pool sparse columns so each expected cell count reaches 5.
    n0, n1 = table.sum(axis=1)
    frac = min(n0, n1) / (n0 + n1)
    order = np.argsort(pooled, kind="stable")
    cols, acc, accp = [], np.zeros(2), 0.0
    for k in order:
        acc = acc + table[:, k]
        accp += pooled[k]
        if accp * frac >= MIN_EXPECTED:
            cols.append(acc)
            acc, accp = np.zeros(2), 0.0
    if accp > 0:
        if cols:
            cols[-1] = cols[-1] + acc
        else:
            cols.append(acc)
    if len(cols) < 2:
        return ChiSquared(0.0, 0, 1.0, len(cols))
    res = stats.chi2_contingency(np.array(cols).T, correction=False)
    return ChiSquared(float(res.statistic), int(res.dof), float(res.pvalue), len(cols))
