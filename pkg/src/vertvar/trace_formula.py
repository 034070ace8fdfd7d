"""Weight kernels and the (averaged) Petersson trace formula.

Substituting u = t^2 turns the kernel transforms into integrals over the
support of h:  hbar(v) = sqrt(2/pi) int h(t) exp(i v t^2) dt.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .exp_sums import divisor_count, kloosterman_fast
from .hecke_forms import cached_eigenforms, dim_cusp, hecke_eigenvalue
from .quadrature import panel_nodes
from .testfunctions import TestFunction

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)


class WindowError(ValueError):
    """Parameters fall outside the off-diagonal working window."""


# ---------------------------------------------------------------------------
# kernel

def default_h(t):
    t = np.asarray(t, dtype=float)
    u = 2 * t - 3
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1 / (1 - u[inside] ** 2))
    return out


@dataclass
class WeightKernel:
    """Smooth weight h supported on [t0, t1] with 0 < t0."""

    h: Callable = default_h
    support: tuple = (1.0, 2.0)
    name: str = "default"

    def __post_init__(self):
        if not 0 < self.support[0] < self.support[1]:
            raise ValueError("support must be an interval in (0, inf)")

    def __call__(self, t):
        return self.h(t)

    def _t_nodes(self, vmax: float, order: int = 16):
        a, b = self.support
        # phase v t^2 has local frequency 2 v t; keep each panel within one period
        periods = 2 * abs(vmax) * b * (b - a) / (2 * math.pi)
        panels = max(16, int(math.ceil(periods)) + 1)
        return panel_nodes(np.linspace(a, b, panels + 1), order)

    def transform(self, v, weight: Callable | None = None, phase: str = "exp", refine: int = 1):
        """sqrt(2/pi) int h(t) weight(t) e^{i v t^2} dt (``phase='cos'`` takes the real kernel)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.empty(v.shape, dtype=complex)
        order = np.argsort(np.abs(v))
        for chunk in np.array_split(order, max(1, len(v) // 256)):
            if len(chunk) == 0:
                continue
            t, w = self._t_nodes(np.max(np.abs(v[chunk])) * refine + (refine - 1) * 8)
            amp = self.h(t) * w * (weight(t) if weight is not None else 1.0)
            arg = np.outer(v[chunk], t * t)
            ker = np.cos(arg) if phase == "cos" else np.exp(1j * arg)
            out[chunk] = SQRT_2_OVER_PI * (ker @ amp)
        return out

    def hbar(self, v):
        """hbar(v) = int_0^inf h(sqrt u) / sqrt(2 pi u) e^{iuv} du."""
        out = self.transform(v)
        return out if np.ndim(v) else complex(out[0])

    def hbar_re(self, w: complex, v):
        """int h(sqrt u) / sqrt(2 pi u) u^{w/2} cos(uv) du."""
        out = self.transform(v, weight=lambda t: t ** w, phase="cos")
        return out if np.ndim(v) else complex(out[0])

    def fourier(self, v):
        """h^(v) = int h(t) e^{-2 pi i t v} dt."""
        scalar = np.ndim(v) == 0
        v = np.atleast_1d(np.asarray(v, dtype=float))
        a, b = self.support
        out = np.empty(v.shape, dtype=complex)
        order = np.argsort(np.abs(v))
        for chunk in np.array_split(order, max(1, len(v) // 256)):
            if len(chunk) == 0:
                continue
            panels = max(16, int(math.ceil(np.max(np.abs(v[chunk])) * (b - a))) + 1)
            t, w = panel_nodes(np.linspace(a, b, panels + 1), 16)
            out[chunk] = np.exp(-2j * np.pi * np.outer(v[chunk], t)) @ (self.h(t) * w)
        return complex(out[0]) if scalar else out

    @cached_property
    def integral(self) -> float:
        return float(self.fourier(np.array([0.0]))[0].real)

    @cached_property
    def moments(self) -> tuple[float, float]:
        """(int h(sqrt u) u^{1/4} / sqrt(2 pi u) du, same with an extra log u)."""
        t, w = panel_nodes(np.linspace(*self.support, 65), 24)
        hw = self.h(t) * w * SQRT_2_OVER_PI * np.sqrt(t)
        return float(np.sum(hw)), float(np.sum(hw * 2 * np.log(t)))

    @cached_property
    def fourier_v4_moment(self) -> float:
        """int v^4 |h^(v)| dv, the size parameter in the averaged formula's error."""
        # |h^(v)| decays like exp(-sqrt(2 pi v)); past v ~ 400 only rounding noise remains,
        # which the v^4 weight would amplify
        edges = np.concatenate([np.linspace(0, 50, 201), np.geomspace(50, 400, 201)[1:]])
        v, w = panel_nodes(edges, 8)
        vals = np.abs(self.fourier(v)) * v ** 4
        return float(2 * np.sum(vals * w))


def hbar(kernel: WeightKernel, v):
    return kernel.hbar(v)


# ---------------------------------------------------------------------------
# starred kernel

@dataclass(frozen=True)
class Window:
    """Constants that make the working window of the off-diagonal analysis concrete."""

    eps: float = 0.1
    spread: float = 20.0      # n_i d_i within [K / spread, spread * K]
    c_const: float = 100.0    # c K^2 / (n1 n2) <= c_const * K^eps

    def violations(self, K, d1, d2, n1, n2, m1, m2, c) -> list[str]:
        out = []
        for i, (n, d) in enumerate(((n1, d1), (n2, d2)), 1):
            if not K / self.spread <= n * d <= self.spread * K:
                out.append(f"n{i} d{i} = {n * d:g} not comparable to K")
            if d > K ** (1 / 32):
                out.append(f"d{i} = {d} exceeds K^(1/32)")
        top = K ** (0.5 + self.eps)
        if not K ** 0.125 <= m1 <= top:
            out.append(f"m1 = {m1} outside [K^(1/8), K^(1/2+eps)]")
        if not 1 <= m2 <= top:
            out.append(f"m2 = {m2} outside [1, K^(1/2+eps)]")
        if c * K * K / (n1 * n2) > self.c_const * K ** self.eps:
            out.append("c K^2 / (n1 n2) too large")
        return out


DEFAULT_WINDOW = Window()


def hbar_star_argument(K, n1, n2, m1, m2, c=1):
    return c * K * K / (8 * math.pi * np.sqrt(n1 * (n1 + m1) * n2 * (n2 + m2)))


def hbar_star(kernel: WeightKernel, psi1: TestFunction, psi2: TestFunction, d1, d2, n1, n2,
              m1, m2, K, v=None, c=1, check_window: bool = False,
              window: Window = DEFAULT_WINDOW, half_exponent: bool = True, refine: int = 1):
    """(K/8) int h(sqrt u) sqrt(u) / sqrt(2 pi u) psi1(.) psi2(.) exp(.) e^{iuv} du.

    ``n1`` may be an array; ``v`` defaults to c K^2 / (8 pi sqrt(n1(n1+m1)n2(n2+m2))).
    ``half_exponent`` selects exp(-sqrt(u) K m^2 / (2 (2n+m)^2)).
    """
    n1 = np.asarray(n1, dtype=float)
    if check_window:
        bad = Window.violations(window, K, d1, d2, float(np.min(n1)), n2, m1, m2, c)
        if bad:
            raise WindowError("; ".join(bad))
    if v is None:
        v = hbar_star_argument(K, n1, n2, m1, m2, c)
    v = np.broadcast_to(np.asarray(v, dtype=float), n1.shape)
    a, b = kernel.support
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    t, w = kernel._t_nodes(vmax * refine + (refine - 1) * 8)
    base = kernel.h(t) * t * w * SQRT_2_OVER_PI * K / 8
    half = 0.5 if half_exponent else 1.0
    n1f = n1.reshape(-1, 1)
    arg1 = t * K / (2 * math.pi * d1 * (n1f + m1))
    arg2 = t * K / (2 * math.pi * d2 * (n2 + m2))
    expo = -half * t * K * (m1 ** 2 / (2 * n1f + m1) ** 2 + m2 ** 2 / (2 * n2 + m2) ** 2)
    amp = base * psi1(arg1) * psi2(arg2) * np.exp(expo)
    out = np.sum(amp * np.exp(1j * v.reshape(-1, 1) * t * t), axis=1)
    return out.reshape(n1.shape) if n1.ndim else complex(out[0])


# ---------------------------------------------------------------------------
# Bessel J

def _bessel_series(nu: int, x: np.ndarray) -> np.ndarray:
    half = x / 2
    term = np.exp(nu * np.log(np.where(half > 0, half, 1.0)) - gammaln(nu + 1))
    term = np.where(half > 0, term, 1.0 if nu == 0 else 0.0)
    total = term.copy()
    j = 0
    while True:
        j += 1
        term = -term * half * half / (j * (j + nu))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)) or j > 400:
            return total


def _bessel_miller(nu: int, x: float, start: int) -> float:
    jn1, jn = 0.0, 1e-300
    val = 0.0
    norm = 0.0
    for n in range(start, 0, -1):
        jm = 2 * n / x * jn - jn1
        jn1, jn = jn, jm
        if n - 1 == nu:
            val = jn
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2 * jn
        if abs(jn) > 1e250:  # rescale to stay in range
            jn1, jn, val, norm = jn1 * 1e-250, jn * 1e-250, val * 1e-250, norm * 1e-250
    norm += jn
    return val / norm


def bessel_j(nu: int, x):
    """J_nu(x) for integer nu >= 0 and x >= 0.

    Power series where its terms decrease from the first (x <= 2 sqrt(nu + 1));
    Miller's backward recurrence otherwise, accepted only if two start indices agree.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= 2 * math.sqrt(nu + 1)
    out[small] = _bessel_series(nu, x[small])
    for i in np.nonzero(~small)[0]:
        xi = x[i]
        start = 2 * (int(max(nu, xi) + 20 + math.sqrt(60 * max(nu, xi))) // 2)
        a = _bessel_miller(nu, xi, start)
        b = _bessel_miller(nu, xi, start + 40)
        # for x > nu, J oscillates with envelope sqrt(2 / (pi x)); near zeros compare to that
        scale = max(abs(b), math.sqrt(2 / (math.pi * xi))) if xi > nu else abs(b)
        if abs(a - b) > 1e-13 * scale:
            raise ArithmeticError(f"Miller recurrence unstable at nu={nu}, x={xi}")
        out[i] = b
    return out


# ---------------------------------------------------------------------------
# Petersson formulas

def harmonic_weight(f) -> float:
    return 2 * math.pi ** 2 / ((f.weight - 1) * f.sym2_L1)


@dataclass
class PeterssonReport:
    mode: str
    m: int
    n: int
    lhs: float
    rhs: float
    residual: float
    allowance: float = 0.0
    K: float | None = None
    weight: int | None = None
    c_max: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.allowance

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _eigen_bound(m: int, n: int) -> int:
    return max(64, 2 * max(m, n) + 8)


def classical_petersson_check(k: int, m: int, n: int, tol: float = 1e-16) -> PeterssonReport:
    """Residual of sum_f w_f lambda(m) lambda(n) = delta + 2 pi i^{-k} sum_c S/c J_{k-1}(4 pi sqrt(mn)/c)."""
    if k % 2 or k < 4:
        raise ValueError("k must be even and >= 4")
    forms = cached_eigenforms(k, _eigen_bound(m, n)) if dim_cusp(k) else ()
    spectral = math.fsum(harmonic_weight(f) * hecke_eigenvalue(f, m) * hecke_eigenvalue(f, n) for f in forms)
    x0 = 4 * math.pi * math.sqrt(m * n)
    sign = (-1) ** (k // 2)
    terms, c = [], 0
    while True:
        c += 1
        jv = float(bessel_j(k - 1, x0 / c)[0])
        terms.append(kloosterman_fast(m, n, c) / c * jv)
        # |J_{k-1}(x)| <= (x/2)^{k-1}/(k-1)! and |S| <= d(c) sqrt(gcd) sqrt(c); tail decays like c^{1-k}
        bound = math.exp((k - 1) * math.log(x0 / (2 * c)) - math.lgamma(k)) * math.sqrt(m * n) * 2 * c / (k - 3)
        if (x0 / c < k - 1 and bound < tol) or c > 10 ** 4:
            break
    geometric = (1.0 if m == n else 0.0) + 2 * math.pi * sign * math.fsum(terms)
    return PeterssonReport("classical", m, n, spectral, geometric, spectral - geometric,
                           1e-8, weight=k, c_max=c)


def averaged_spectral_side(m: int, n: int, K: float, kernel: WeightKernel) -> float:
    a, b = kernel.support
    acc = []
    for k in range(4, int(b * K) + 3, 2):
        hk = float(kernel.h(np.array([(k - 1) / K]))[0])
        if hk == 0.0 or dim_cusp(k) == 0:
            continue
        for f in cached_eigenforms(k, _eigen_bound(m, n)):
            acc.append(2 * hk * harmonic_weight(f) * hecke_eigenvalue(f, m) * hecke_eigenvalue(f, n))
    return math.fsum(acc)


def averaged_geometric_side(m: int, n: int, K: float, kernel: WeightKernel,
                            tol: float = 1e-13, c_cap: int = 10 ** 4) -> tuple[float, int]:
    root = math.sqrt(m * n)
    terms, c, quiet = [], 0, 0
    block = 64
    while c < c_cap:
        cs = np.arange(c + 1, c + block + 1)
        hb = kernel.hbar(cs * K * K / (8 * math.pi * root))
        for ci, h in zip(cs, hb):
            s = kloosterman_fast(m, n, int(ci))
            terms.append(s / math.sqrt(ci) * np.exp(2j * math.pi * 2 * root / ci) * h)
            bound = divisor_count(int(ci)) * math.sqrt(math.gcd(math.gcd(m, n), int(ci))) * abs(h)
            quiet = quiet + 1 if bound < tol else 0
        c += block
        if quiet >= 32:
            break
    z = complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))
    geo = -math.sqrt(math.pi) * (m * n) ** -0.25 * K * (np.exp(-2j * math.pi / 8) * z).imag
    diag = kernel.integral * K if m == n else 0.0
    return diag + geo, c


def averaged_exact_side(m: int, n: int, K: float, kernel: WeightKernel, tol: float = 1e-16) -> float:
    """sum_k 2 h((k-1)/K) times the exact single-weight Petersson geometric side."""
    a, b = kernel.support
    ks = np.arange(2, int(b * K) + 4, 2)
    hk = kernel.h((ks - 1) / K)
    ks, hk = ks[hk > 0], hk[hk > 0]
    if len(ks) == 0:
        return 0.0
    x0 = 4 * math.pi * math.sqrt(m * n)
    signs = np.where((ks // 2) % 2 == 0, 1.0, -1.0)
    terms, c = [], 0
    while c < 10 ** 4:
        c += 1
        x = x0 / c
        jsum = math.fsum(2 * h * sg * float(bessel_j(int(k) - 1, x)[0]) for k, h, sg in zip(ks, hk, signs))
        terms.append(2 * math.pi * kloosterman_fast(m, n, c) / c * jsum)
        kmin = int(ks[0]) - 1
        bound = math.exp(kmin * math.log(x / 2) - math.lgamma(kmin + 1)) * 2 * len(ks) * math.sqrt(m * n) * 2 * c
        if x < kmin and bound < tol:
            break
    diag = 2 * float(np.sum(hk)) if m == n else 0.0
    return diag + math.fsum(terms)


def averaged_petersson_sides(m: int, n: int, K: float, kernel: WeightKernel | None = None,
                             constant: float = 10.0) -> PeterssonReport:
    """Both sides of the averaged formula; allowance = constant sqrt(mn) K^-4 int v^4 |h^| + 1_{m=n}."""
    kernel = kernel or WeightKernel()
    lhs = averaged_spectral_side(m, n, K, kernel)
    rhs, cmax = averaged_geometric_side(m, n, K, kernel)
    scale = math.sqrt(m * n) / K ** 4 * kernel.fourier_v4_moment
    diag = 1.0 if m == n else 0.0
    implied = max(0.0, abs(lhs - rhs) - diag) / scale
    return PeterssonReport("averaged", m, n, lhs, rhs, lhs - rhs, constant * scale + diag, K=K, c_max=cmax,
                           details={"fourier_v4_moment": kernel.fourier_v4_moment,
                                    "implied_constant": implied})
