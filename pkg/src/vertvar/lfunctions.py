"""Symmetric-square and Rankin-Selberg L-functions of level-one eigenforms.

L(s, sym^2 f) is evaluated anywhere in the plane by a smoothed approximate
functional equation with gamma factor Gamma_R(s+1) Gamma_C(s+k-1), conductor 1
and root number +1.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import loggamma

from .hecke_forms import HeckeEigenform, _multiplicative_table, primes_up_to
from .zeta import zeta_array

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2 * math.pi)


def sym2_coefficients(f: HeckeEigenform, N: int) -> np.ndarray:
    """Dirichlet coefficients A(n) of L(s, sym^2 f) for n <= N."""
    if any(p not in f.lambda_primes for p in primes_up_to(N)):
        raise KeyError(f"eigenvalues needed up to {N}, have {f.prime_bound}")

    def local(p, e):
        e1 = f.lambda_primes[p] ** 2 - 1
        h = [1.0, e1, e1 * e1 - e1]
        while len(h) <= e:
            h.append(e1 * h[-1] - e1 * h[-2] + h[-3])
        return h[e]

    return _multiplicative_table(N, local)


def log_gamma_factor(s, k: int):
    s = np.asarray(s, dtype=complex)
    return (-(s + 1) / 2 * LOG_PI + loggamma((s + 1) / 2)
            + math.log(2) - (s + k - 1) * LOG_2PI + loggamma(s + k - 1))


class Sym2L:
    """Evaluator for L(s, sym^2 f) at arbitrary complex points.

    ``c``, ``step`` and ``width`` describe the trapezoidal rule on the line
    Re w = c for the cutoff integral with weight exp((w/beta)^2).
    """

    def __init__(self, f: HeckeEigenform, c: float = 2.0, step: float = 0.1,
                 width: float = 32.0, beta: float = 4.0, tol: float = 1e-15):
        self.f = f
        self.k = f.weight
        self.c = c
        self.beta = beta
        self.u = np.arange(-width, width + step / 2, step)
        self.w = c + 1j * self.u
        self.step = step
        self.tol = tol
        self._A = np.zeros(1)
        self._powers: dict[int, np.ndarray] = {}

    def _coeffs(self, N: int) -> np.ndarray:
        if len(self._A) <= N:
            grow = max(N, 2 * len(self._A))
            if N <= self.f.prime_bound:
                grow = min(grow, self.f.prime_bound)
            self._A = sym2_coefficients(self.f, grow)
        return self._A[: N + 1]

    def _kernel(self, s: complex, theta: float) -> np.ndarray:
        lg = log_gamma_factor(s + self.w, self.k) - log_gamma_factor(s, self.k)
        return np.exp((self.w / self.beta) ** 2 - 1j * theta * self.w + lg) / self.w * (self.step / (2 * math.pi))

    def cutoff(self, s: complex, n: np.ndarray, theta: float = 0.0) -> np.ndarray:
        """V_s(n) = (1/2 pi i) int gamma(s+w)/gamma(s) G(w) n^{-w} dw / w.

        G(w) = exp((w/beta)^2 - i theta w); the tilt theta offsets the
        exponential growth of the gamma ratio when Im s is large.
        """
        g = self._kernel(s, theta)
        n = np.asarray(n, dtype=float)
        N = len(n)
        if np.array_equal(n, np.arange(1, N + 1)):
            if N not in self._powers:
                self._powers[N] = np.exp(-np.outer(np.log(n), self.w))
            return self._powers[N] @ g
        return np.exp(-np.outer(np.log(n), self.w)) @ g

    def _length(self, s: complex) -> int:
        t = abs(s.imag)
        # V_s(x) decays once x exceeds the square root of the analytic conductor
        q = (abs(s) + 3) * (self.k + t + 3) ** 2 / (4 * math.pi ** 3)
        return int(4 * math.sqrt(q)) + 20

    def __call__(self, s) -> complex:
        s = complex(s)
        N = self._length(s)
        # the dual sum uses G(-w), i.e. the opposite tilt
        theta = 0.9 * 0.75 * math.pi * math.tanh(s.imag)
        while True:
            n = np.arange(1, N + 1, dtype=float)
            V1 = self.cutoff(s, n, theta)
            V2 = self.cutoff(1 - s, n, -theta)
            if max(abs(V1[-1]), abs(V2[-1])) < self.tol:
                break
            if N > 10 ** 6:
                raise RuntimeError("approximate functional equation did not truncate")
            N *= 2
        A = self._coeffs(N)[1:]
        ratio = np.exp(log_gamma_factor(1 - s, self.k) - log_gamma_factor(s, self.k))
        first = np.sum(A * np.exp(-s * np.log(n)) * V1)
        second = np.sum(A * np.exp((s - 1) * np.log(n)) * V2)
        return complex(first + ratio * second)

    def values(self, s_values) -> np.ndarray:
        return np.array([self(s) for s in np.ravel(s_values)]).reshape(np.shape(s_values))


def rankin_selberg(f: HeckeEigenform, s_values, evaluator: Sym2L | None = None) -> np.ndarray:
    """L(s, f x f) = zeta(s) L(s, sym^2 f) / zeta(2s)."""
    s_values = np.asarray(s_values, dtype=complex)
    ev = evaluator or Sym2L(f)
    return zeta_array(s_values) * ev.values(s_values) / zeta_array(2 * s_values)
