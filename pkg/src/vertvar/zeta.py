"""Riemann zeta by Euler-Maclaurin summation with an explicit remainder bound."""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np


@lru_cache(maxsize=4)
def _bernoulli_ratios(M: int, dps: int):
    with mpmath.workdps(dps):
        return [mpmath.bernoulli(2 * j) / mpmath.factorial(2 * j) for j in range(1, M + 2)]


def _em_params(s_abs: float, sigma: float) -> tuple[int, int]:
    N = int(max(12, s_abs / math.pi + 12))
    return N, 24


def zeta_em(s, dps: int = 30, tol: float | None = None):
    """zeta(s) for complex s != 1, returned with a rigorous truncation bound.

    Returns ``(value, bound)`` as mpmath numbers.
    """
    with mpmath.workdps(dps + 10):
        s = mpmath.mpc(s)
        if s == 1:
            raise ZeroDivisionError("pole at s = 1")
        if tol is None:
            tol = mpmath.mpf(10) ** (-dps)
        N, M = _em_params(float(abs(s)), float(s.real))
        while True:
            ratios = _bernoulli_ratios(M, dps + 10)
            total = mpmath.fsum(mpmath.power(n, -s) for n in range(1, N))
            Ns = mpmath.power(N, -s)
            total += N * Ns / (s - 1) + Ns / 2
            rising = s
            term_pow = Ns / N
            for j in range(1, M + 1):
                total += ratios[j - 1] * rising * term_pow
                rising *= (s + 2 * j - 1) * (s + 2 * j)
                term_pow /= N * N
            # remainder of order 2M+2, bounded by the next term times |s+2M+1|/(sigma+2M+1)
            bound = abs(ratios[M] * rising * term_pow) * abs(s + 2 * M + 1) / (s.real + 2 * M + 1)
            if bound <= tol * max(1, abs(total)) or N > 10 ** 6:
                return total, bound
            N *= 2


def zeta_line(s, dps: int = 30):
    """zeta(s) as an mpmath number, certified to roughly ``dps`` digits."""
    return zeta_em(s, dps)[0]


@lru_cache(maxsize=1)
def _float_ratios():
    return np.array([float(b) for b in _bernoulli_ratios(20, 30)])


def zeta_array(s) -> np.ndarray:
    """Vectorized complex128 zeta(s) using the same summation.

    The remainder bound is checked against 1e-14 relative and a
    ``FloatingPointError`` is raised if it fails.
    """
    s = np.asarray(s, dtype=complex)
    flat = s.ravel()
    if flat.size == 0:
        return s.copy()
    N = int(max(20, 0.5 * np.max(np.abs(flat)) + 20))
    M = 20
    n = np.arange(1, N, dtype=float)
    out = np.empty_like(flat)
    ratios = _float_ratios()
    logN = math.log(N)
    for lo in range(0, flat.size, 512):
        ss = flat[lo:lo + 512]
        head = np.exp(-np.outer(ss, np.log(n))).sum(axis=1)
        Ns = np.exp(-ss * logN)
        total = head + N * Ns / (ss - 1) + Ns / 2
        rising = ss.copy()
        pw = Ns / N
        for j in range(1, M + 1):
            total += ratios[j - 1] * rising * pw
            rising = rising * (ss + 2 * j - 1) * (ss + 2 * j)
            pw = pw / (N * N)
        bound = np.abs(ratios[M] * rising * pw) * np.abs(ss + 2 * M + 1) / (ss.real + 2 * M + 1)
        if np.any(bound > 1e-14 * np.maximum(1, np.abs(total))):
            raise FloatingPointError("zeta remainder bound exceeded")
        out[lo:lo + 512] = total
    return out.reshape(s.shape)
