"""The measure mu_f(psi) of |f(iy)|^2 y^k on the imaginary axis and its decomposition.

For the L^2-normalized eigenform f of weight k,

    |f(iy)|^2 y^k = (2 pi^2 / L(1, sym^2 f)) * y * (sum_n lambda(n) sqrt(g_k(4 pi n y)))^2,

where g_k(x) = x^(k-1) e^(-x) / Gamma(k) is the Gamma density.  Writing the
measure in this form keeps every term O(1) regardless of the weight.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, loggamma

from .hecke_forms import HeckeEigenform, lambda_table, primes_up_to, sym2_L1
from .lfunctions import Sym2L
from .quadrature import panel_nodes
from .testfunctions import TestFunction
from .zeta import zeta_array


class CoverageError(ValueError):
    """Eigenvalue data does not reach the index range a computation needs."""


class TruncationError(RuntimeError):
    """A contour or series truncation could not be certified."""


def _sqrt_gamma_density(k: int, x):
    return np.exp(0.5 * ((k - 1) * np.log(x) - x - gammaln(k)))


def _n_window(k: int, y: float, spread: float = 12.0) -> tuple[int, int]:
    # g_k(4 pi n y) is negligible (< e^-72 relative) outside this window in n
    c = k - 1
    w = spread * math.sqrt(k) + 40
    return max(1, int((c - w) / (4 * math.pi * y))), int((c + w) / (4 * math.pi * y)) + 1


def _lambda(f: HeckeEigenform, N: int) -> np.ndarray:
    if N > f.prime_bound and any(p > f.prime_bound for p in primes_up_to(N)):
        raise CoverageError(f"weight {f.weight}: need eigenvalues up to {N}, have {f.prime_bound}")
    return lambda_table(f, N)


def required_index(k: int, y_min: float) -> int:
    """Largest n that mu_f and E_psi (direct) can touch for psi supported above y_min."""
    return _n_window(k, y_min)[1]


def coverage_needed(k: int, psi: TestFunction) -> int:
    """Largest eigenvalue index touched by mu_f, diagonal_direct and both shifted_sum_S methods."""
    lo = psi.log_support()[0]
    w = 12 * math.sqrt(k) + 40
    needs = [_n_window(k, 1.0)[1],
             int((k - 1 + w) / (2 * math.pi * math.exp(lo))) + 1,
             int(math.ceil(k / (2 * math.pi * math.exp(lo)))) + 1]
    lo_diag = lo if k > 200 else max(lo, math.log(1e-3 / (4 * math.pi)))
    needs.append(_n_window(k, math.exp(lo_diag))[1])
    return max(needs)


def _amplitude_sum(f: HeckeEigenform, y: np.ndarray) -> np.ndarray:
    k = f.weight
    lam = _lambda(f, _n_window(k, float(y.min()))[1])
    out = np.empty_like(y)
    for i, yy in enumerate(y):
        lo, hi = _n_window(k, yy)
        n = np.arange(lo, hi + 1)
        out[i] = np.dot(lam[lo:hi + 1], _sqrt_gamma_density(k, 4 * math.pi * n * yy))
    return out


def _L1(f: HeckeEigenform) -> float:
    return f.sym2_L1 if math.isfinite(f.sym2_L1) else sym2_L1(f)


def measure_density(f: HeckeEigenform, y) -> np.ndarray:
    """|f(iy)|^2 y^k for the L^2-normalized f."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return 2 * math.pi ** 2 / _L1(f) * y * _amplitude_sum(f, y) ** 2


def _log_panels(a: float, b: float, panels: int, order: int = 20):
    return panel_nodes(np.linspace(a, b, panels + 1), order)


def mu_f(f: HeckeEigenform, psi: TestFunction, rtol: float = 1e-11, return_error: bool = False):
    """int_0^inf |f(iy)|^2 y^k psi(y) dy / y.

    Uses the symmetry y -> 1/y of the density, so only y >= 1 is sampled.
    """
    lo, hi = psi.log_support()
    tmax = max(abs(lo), abs(hi))
    # density beyond y ~ (k + 40 sqrt k)/(2 pi) is below e^-80 of its peak
    tcap = math.log((f.weight + 40 * math.sqrt(f.weight) + 60) / (2 * math.pi))
    tmax = min(tmax, max(tcap, 0.1))

    def integral(panels):
        t, w = _log_panels(0.0, tmax, panels)
        sym = psi.profile(t) + psi.profile(-t)
        mask = sym != 0
        if not np.any(mask):
            return 0.0
        y = np.exp(t[mask])
        return math.fsum(measure_density(f, y) * sym[mask] * w[mask])

    panels = 8
    prev = integral(panels)
    while True:
        panels *= 2
        cur = integral(panels)
        err = abs(cur - prev)
        if err <= rtol * abs(cur) + 1e-15 or panels > 4096:
            break
        prev = cur
    return (cur, err) if return_error else cur


def expected_value(psi: TestFunction) -> float:
    return 3 / math.pi * psi.log_integral()


def mellin(psi: TestFunction, s):
    return psi.mellin(s)


def diagonal_direct(f: HeckeEigenform, psi: TestFunction, rtol: float = 1e-11) -> float:
    """The m = n part of mu_f(psi), summed directly."""
    k = f.weight
    lo, hi = psi.log_support()
    lo = max(lo, math.log((k - 1 - 12 * math.sqrt(k) - 40) / (4 * math.pi)) if k > 200 else lo)
    lam = _lambda(f, _n_window(k, math.exp(lo))[1])
    lam2 = lam ** 2
    lo_cap = math.log(1e-3 / (4 * math.pi)) if k < 200 else lo
    lo = max(lo, lo_cap)

    def integral(panels):
        t, w = _log_panels(lo, hi, panels)
        prof = psi.profile(t)
        acc = []
        for tt, ww, p in zip(t, w, prof):
            if p == 0:
                continue
            y = math.exp(tt)
            a, b = _n_window(k, y)
            n = np.arange(a, b + 1)
            dens = np.exp((k - 1) * np.log(4 * math.pi * n * y) - 4 * math.pi * n * y - gammaln(k))
            acc.append(ww * p * y * np.dot(lam2[a:b + 1], dens))
        return math.fsum(acc) * 2 * math.pi ** 2 / _L1(f)

    panels = 16
    prev = integral(panels)
    while True:
        panels *= 2
        cur = integral(panels)
        if abs(cur - prev) <= rtol * max(1.0, abs(cur)) or panels > 2048:
            return cur
        prev = cur


@dataclass
class ContourResult:
    value: float
    height: float
    tail_bound: float
    nodes: int


class ErrorTermContour:
    """E_psi on the line Re s = 1/2, caching L(s, f x f) per eigenform."""

    def __init__(self, f: HeckeEigenform, panel: float = 1.0, order: int = 20):
        self.f = f
        self.k = f.weight
        self.L = Sym2L(f)
        self.panel = panel
        self.order = order
        self._cache: dict[float, complex] = {}

    def _rankin(self, s: np.ndarray) -> np.ndarray:
        missing = [x for x in s if x.imag not in self._cache]
        if missing:
            ms = np.array(missing)
            vals = zeta_array(ms) * self.L.values(ms) / zeta_array(2 * ms)
            self._cache.update(zip((x.imag for x in missing), vals))
        return np.array([self._cache[x.imag] for x in s])

    def integrand(self, psi: TestFunction, t: np.ndarray) -> np.ndarray:
        s = 0.5 + 1j * np.asarray(t, dtype=float)
        k = self.k
        gam = np.exp(loggamma(k + s - 1) - gammaln(k) - s * math.log(4 * math.pi))
        return psi.mellin(s - 1) * self._rankin(s) * gam

    def _envelope(self, psi: TestFunction, t: float) -> float:
        # crude upper envelope |psi~| |Gamma ratio| (t+3)^(3/2) with zeta/L growth folded in
        s = 0.5 + 1j * t
        g = abs(np.exp(loggamma(self.k + s - 1) - gammaln(self.k)))
        return abs(psi.mellin(s - 1)) * g * (t + 3) ** 1.5 * 10

    def __call__(self, psi: TestFunction, tol: float = 1e-12) -> ContourResult:
        scale = 2 * math.pi ** 2 / _L1(self.f) / math.pi
        total, t0, nodes = [], 0.0, 0
        while True:
            t, w = panel_nodes(np.array([t0, t0 + self.panel]), self.order)
            vals = np.real(self.integrand(psi, t))
            total.append(float(np.dot(vals, w)))
            nodes += len(t)
            t0 += self.panel
            # tail: envelope decays at least geometrically past the Gamma peak
            env = self._envelope(psi, t0)
            if env * 4 < tol or t0 > 400:
                break
        if t0 > 400:
            raise TruncationError("E_psi contour height exceeded 400")
        return ContourResult(scale * math.fsum(total), t0, scale * env * 4, nodes)


def error_term_E(f: HeckeEigenform, psi: TestFunction, method: str = "contour") -> float:
    """E_psi, the diagonal part of mu_f(psi) minus its expected value."""
    if method == "contour":
        return ErrorTermContour(f)(psi).value
    if method == "direct":
        return diagonal_direct(f, psi) - expected_value(psi)
    raise ValueError(f"unknown method {method!r}")


def shifted_sum_S(f: HeckeEigenform, psi: TestFunction, tol: float = 1e-14,
                  method: str = "approximate") -> float:
    """Shifted-convolution sum over pairs m != n.

    ``approximate``: each pair carries lambda(n) lambda(m) / sqrt(nm), the
    Gaussian exp(-k (m-n)^2 / (2 (m+n)^2)) and psi(k / (2 pi (m+n))).
    ``exact``: the m != n part of mu_f(psi) itself, grouped by j = m + n.
    """
    if method == "exact":
        return _shifted_sum_exact(f, psi, tol)
    if method != "approximate":
        raise ValueError(f"unknown method {method!r}")
    k = f.weight
    lo, hi = psi.log_support()
    # j = m + n with psi(k / (2 pi j)) nonzero
    j_min = max(3, int(k / (2 * math.pi * math.exp(hi))))
    j_max = int(math.ceil(k / (2 * math.pi * math.exp(lo)))) + 1
    lam = _lambda(f, j_max)
    gauss_cut = math.sqrt(2 * math.log(1 / tol) / k)  # |m - n| / j beyond this is negligible
    acc = []
    for j in range(j_min, j_max + 1):
        p = float(psi(k / (2 * math.pi * j)))
        if p == 0.0:
            continue
        n = np.arange(1, j)
        m = j - n
        keep = (n != m) & (np.abs(m - n) <= gauss_cut * j + 1)
        n, m = n[keep], m[keep]
        terms = lam[n] * lam[m] / np.sqrt(n * m) * np.exp(-k * (m - n) ** 2 / (2.0 * j * j))
        acc.append(p * math.fsum(terms))
    return math.pi / (2 * _L1(f)) * math.fsum(acc)


def _shifted_sum_exact(f: HeckeEigenform, psi: TestFunction, tol: float) -> float:
    # pair (n, m) contributes (2 sqrt(nm)/j)^(k-1) * int psi(y) g_k(2 pi j y) dy
    k = f.weight
    lo, hi = psi.log_support()
    w = 12 * math.sqrt(k) + 40
    j_min = max(3, int((k - 1 - w) / (2 * math.pi * math.exp(hi))))
    j_max = int((k - 1 + w) / (2 * math.pi * math.exp(lo))) + 1
    lam = _lambda(f, j_max)
    panels = max(32, int(8 * (hi - lo) * math.sqrt(k)))
    t, wt = _log_panels(lo, hi, panels, 24)
    prof = psi.profile(t) * wt * np.exp(t)
    keep = prof != 0
    t, prof = t[keep], prof[keep]
    cut = math.sqrt(2 * math.log(1 / tol) / (k - 1))
    acc = []
    for j in range(j_min, j_max + 1):
        x = 2 * math.pi * j * np.exp(t)
        G = np.dot(prof, np.exp((k - 1) * np.log(x) - x - gammaln(k)))
        if G == 0.0:
            continue
        n = np.arange(1, j)
        m = j - n
        sel = (n != m) & (np.abs(m - n) <= cut * j + 1)
        n, m = n[sel], m[sel]
        r = (2.0 * np.sqrt(n * m) / j)
        acc.append(G * math.fsum(lam[n] * lam[m] * np.exp((k - 1) * np.log(r))))
    return 2 * math.pi ** 2 / _L1(f) * math.fsum(acc)


@dataclass
class MeasureReport:
    mu: float
    expected: float
    e_term: float
    s_term: float
    residual: float
    weight: int = 0
    form_index: int = 0
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def decomposition_check(f: HeckeEigenform, psi: TestFunction, e_method: str = "contour",
                        tol_factor: float = 1e-2) -> MeasureReport:
    """Compare mu_f(psi) with E(psi) + E_psi + S_psi; tolerance tol_factor * k^(-1/2)."""
    mu = mu_f(f, psi)
    ex = expected_value(psi)
    e = error_term_E(f, psi, e_method)
    s = shifted_sum_S(f, psi)
    return MeasureReport(mu, ex, e, s, mu - ex - e - s, f.weight, f.index,
                         max(1e-6, tol_factor / math.sqrt(f.weight)))
