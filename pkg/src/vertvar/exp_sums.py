"""Kloosterman sums and related complete character sums.

Exact evaluations accumulate exponents as integer histograms indexed by
residue mod c (an element of Z[x]/(x^c - 1)) and evaluate the histogram once
at the end in 128-bit arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

EVAL_PREC = 128
QUADRUPLE_MAX_C = 60
SALIE_MAX_C = 200


@dataclass(frozen=True)
class ResidueSumSpec:
    modulus: int
    arguments: tuple

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError("modulus must be >= 1")
        object.__setattr__(self, "arguments", tuple(int(a) % self.modulus for a in self.arguments))


@lru_cache(maxsize=4096)
def units_and_inverses(c: int) -> tuple[np.ndarray, np.ndarray]:
    if c == 1:
        return np.array([0]), np.array([0])
    x = [a for a in range(1, c) if math.gcd(a, c) == 1]
    return np.array(x, dtype=np.int64), np.array([pow(a, -1, c) for a in x], dtype=np.int64)


def totient(c: int) -> int:
    return len(units_and_inverses(c)[0]) if c > 1 else 1


def divisor_count(c: int) -> int:
    return sum(1 + (d * d != c) for d in range(1, math.isqrt(c) + 1) if c % d == 0)


def evaluate_histogram(counts, c: int) -> mpmath.mpc:
    """sum_j counts[j] e(j / c) in EVAL_PREC-bit arithmetic."""
    with mpmath.workprec(EVAL_PREC):
        re = mpmath.fsum(int(n) * mpmath.cospi(mpmath.mpf(2 * j) / c) for j, n in enumerate(counts) if n)
        im = mpmath.fsum(int(n) * mpmath.sinpi(mpmath.mpf(2 * j) / c) for j, n in enumerate(counts) if n)
        return mpmath.mpc(re, im)


def kloosterman_histogram(m: int, n: int, c: int) -> np.ndarray:
    x, xb = units_and_inverses(c)
    return np.bincount((m * x + n * xb) % c, minlength=c)


def kloosterman_exact(m: int, n: int, c: int) -> mpmath.mpc:
    if c < 1:
        raise ValueError("c must be >= 1")
    return evaluate_histogram(kloosterman_histogram(m % c, n % c, c), c)


def kloosterman(m: int, n: int, c: int) -> float:
    """S(m, n; c) as a float, computed from the exact histogram."""
    return float(kloosterman_exact(m, n, c).real)


def kloosterman_fast(m: int, n: int, c: int) -> float:
    """Double-precision S(m, n; c) for use inside long sums."""
    if c == 1:
        return 1.0
    x, xb = units_and_inverses(c)
    r = (m * x + n * xb) % c
    return float(np.cos(2 * np.pi * r / c).sum())


def quadruple_sum(c: int, max_c: int = QUADRUPLE_MAX_C, return_raw: bool = False):
    """sum over a1, a2, b1, b2 mod c of S(a1(a1+b1), a2(a2+b2); c) e_c(2 a1 a2 + a1 b2 + a2 b1).

    Returns an exact integer; the evaluated value must lie within 1e-6 of it.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    if c > max_c:
        raise ValueError(f"quadruple_sum refuses c = {c} > {max_c} (O(c^5) brute force)")
    r = np.arange(c, dtype=np.int64)
    a1 = r[:, None, None, None]
    b1 = r[None, :, None, None]
    a2 = r[None, None, :, None]
    b2 = r[None, None, None, :]
    cross = (2 * a1 * a2 + a1 * b2 + a2 * b1) % c
    P = (r[:, None] * (r[:, None] + r[None, :])) % c        # a1 (a1 + b1)
    Q = P                                                    # a2 (a2 + b2)
    counts = np.zeros(c, dtype=np.int64)
    x, xb = units_and_inverses(c)
    for u, ub in zip(x, xb):
        e = (cross + ((u * P) % c)[:, :, None, None] + ((ub * Q) % c)[None, None, :, :]) % c
        counts += np.bincount(e.ravel(), minlength=c)
    val = evaluate_histogram(counts, c)
    rounded = int(mpmath.nint(val.real))
    if abs(val.real - rounded) >= 1e-6 or abs(val.imag) >= 1e-6:
        raise ArithmeticError(f"quadruple sum at c={c} is not an integer: {val}")
    return (rounded, val) if return_raw else rounded


def salie_type_sum(c: int, l1: int, l2: int, max_c: int = SALIE_MAX_C) -> mpmath.mpc:
    """sum over a, b mod c of S(a(a+l1), b(b+l2); c) e_c(2ab + l2 a + l1 b), by histogram."""
    if c < 1:
        raise ValueError("c must be >= 1")
    if c > max_c:
        raise ValueError(f"salie_type_sum refuses c = {c} > {max_c}")
    r = np.arange(c, dtype=np.int64)
    a, b = r[:, None], r[None, :]
    cross = (2 * a * b + l2 * a + l1 * b) % c
    A = (r * (r + l1)) % c
    B = (r * (r + l2)) % c
    counts = np.zeros(c, dtype=np.int64)
    x, xb = units_and_inverses(c)
    for u, ub in zip(x, xb):
        e = (cross + ((u * A) % c)[:, None] + ((ub * B) % c)[None, :]) % c
        counts += np.bincount(e.ravel(), minlength=c)
    return evaluate_histogram(counts, c)


def salie_type_sum_loop(c: int, l1: int, l2: int) -> mpmath.mpc:
    """Reference evaluation: b outer, a inner, Kloosterman sums evaluated separately."""
    with mpmath.workprec(EVAL_PREC):
        total = mpmath.mpc(0)
        for b in range(c):
            for a in range(c):
                k = kloosterman_exact(a * (a + l1), b * (b + l2), c)
                total += k * mpmath.expjpi(mpmath.mpf(2 * ((2 * a * b + l2 * a + l1 * b) % c)) / c)
        return total


@dataclass
class WeilReport:
    checked: int = 0
    violations: list = field(default_factory=list)
    max_ratio: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations


def weil_check(samples) -> WeilReport:
    """Check |S(m,n;c)| <= d(c) sqrt(gcd(m,n,c)) sqrt(c) on each (m, n, c)."""
    rep = WeilReport()
    for m, n, c in samples:
        s = abs(kloosterman_exact(m, n, c).real)
        bound = divisor_count(c) * math.sqrt(math.gcd(math.gcd(m, n), c)) * math.sqrt(c)
        rep.checked += 1
        rep.max_ratio = max(rep.max_ratio, float(s) / bound)
        if s > bound * (1 + 1e-12):
            rep.violations.append((m, n, c, float(s), bound))
    return rep
