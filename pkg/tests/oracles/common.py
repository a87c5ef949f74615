"""Shared helpers for the independent oracles.

Nothing here imports the package under test. Laws are dictionaries of
integer weights over a stated common denominator.
"""

from __future__ import annotations

import itertools
import json
from fractions import Fraction
from pathlib import Path

import mpmath

DATA = Path(__file__).resolve().parent.parent / "data"


def group(q: int, d: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(q), repeat=d))


def add(a: tuple[int, ...], b: tuple[int, ...], q: int) -> tuple[int, ...]:
    return tuple((x + y) % q for x, y in zip(a, b))


def convolve(p: dict, r: dict, q: int) -> dict:
    out: dict = {}
    for a, pa in p.items():
        for b, rb in r.items():
            s = add(a, b, q)
            out[s] = out.get(s, 0) + pa * rb
    return out


def hockey_stick(p: dict, r: dict, den: int, eps: list[float]) -> list[tuple[Fraction, Fraction, str]]:
    """For each eps: max over directions of sum_t max(0, P - e^eps R), with P, R integer weights over den.

    Outcomes are grouped by their weight pair and each distinct pair is
    compared against e^eps once at 80 digits.
    """
    pairs: dict[tuple[int, int], int] = {}
    for t in set(p) | set(r):
        k = (p.get(t, 0), r.get(t, 0))
        pairs[k] = pairs.get(k, 0) + 1
    out = []
    with mpmath.workdps(80):
        for e in eps:
            ee = mpmath.exp(mpmath.mpf(e))
            best = None
            for flip in (False, True):
                A = B = 0
                for (a, b), cnt in pairs.items():
                    if flip:
                        a, b = b, a
                    if (a > ee * b) if e else (a > b):
                        A += cnt * a
                        B += cnt * b
                val = (mpmath.mpf(A) - ee * B) / den
                if best is None or val > best[2]:
                    best = (Fraction(A, den), Fraction(B, den), val)
            out.append((best[0], best[1], mpmath.nstr(best[2], 20)))
    return out


def frac(v: Fraction) -> str:
    return f"{v.numerator}/{v.denominator}"


def write(name: str, payload: dict) -> None:
    DATA.mkdir(exist_ok=True)
    (DATA / name).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
