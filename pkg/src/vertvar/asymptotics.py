"""Vertical-line contour integrals and the K^{3/2} main terms of the variance.

All line integrals are (1 / 2 pi i) int_{(sigma)} F(s) ds = (1 / 2 pi) int F(sigma + i t) dt,
computed by Gauss-Legendre panels and truncated at a height T that is
doubled until the value and the tail envelope are both below tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy.special import loggamma

from .quadrature import panel_nodes
from .testfunctions import TestFunction
from .trace_formula import WeightKernel
from .zeta import zeta_array, zeta_line

EULER_GAMMA = float(mpmath.euler)
SQRT2_PI = math.sqrt(2) * math.pi


class TruncationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# zeta

def functional_equation_residual(s, dps: int = 30) -> float:
    """|zeta(s) - 2^s pi^{s-1} sin(pi s / 2) Gamma(1-s) zeta(1-s)|, relative to |zeta(s)|."""
    with mpmath.workdps(dps):
        s = mpmath.mpc(s)
        lhs = zeta_line(s, dps)
        rhs = mpmath.power(2, s) * mpmath.power(mpmath.pi, s - 1) * mpmath.sin(mpmath.pi * s / 2) \
            * mpmath.gamma(1 - s) * zeta_line(1 - s, dps)
        return float(abs(lhs - rhs) / max(abs(lhs), mpmath.mpf(10) ** (-dps)))


# ---------------------------------------------------------------------------
# line integrals

@dataclass
class ContourSpec:
    """(1 / 2 pi i) int_{(line)} integrand(s) ds with a truncation height."""

    integrand: Callable
    line: float
    truncation_height: float = 40.0
    panel: float = 1.0
    order: int = 16
    tol: float = 1e-12
    max_height: float = 1000.0


@dataclass
class ContourResult:
    value: complex
    height: float
    change: float
    tail: float


def _edges(lo: float, hi: float, width: float) -> np.ndarray:
    return np.linspace(lo, hi, max(1, int(math.ceil((hi - lo) / width))) + 1)


def _segment(spec: ContourSpec, lo: float, hi: float, near: float = 8.0) -> complex:
    if hi <= lo:
        return 0j
    # poles on the real axis sit a distance |line| from the contour; refine for |t| <= near
    fine = min(spec.panel, abs(spec.line) / 4) if spec.line else spec.panel
    a, b = max(lo, -near), min(hi, near)
    if a < b:
        parts = [_edges(lo, a, spec.panel)[:-1] if lo < a else np.array([]), _edges(a, b, fine),
                 _edges(b, hi, spec.panel)[1:] if b < hi else np.array([])]
        edges = np.concatenate(parts)
    else:
        edges = _edges(lo, hi, spec.panel)
    t, w = panel_nodes(edges, spec.order)
    vals = np.asarray(spec.integrand(spec.line + 1j * t), dtype=complex)
    return complex(np.sum(vals * w)) / (2 * math.pi)


def line_integral(spec: ContourSpec) -> ContourResult:
    """Truncated line integral; doubles T until successive values and the tail envelope agree."""
    T = spec.truncation_height
    value = _segment(spec, -T, T)
    while True:
        T2 = 2 * T
        value2 = value + _segment(spec, -T2, -T) + _segment(spec, T, T2)
        edge = np.abs(np.asarray(spec.integrand(spec.line + 1j * np.array([-T2, T2])), dtype=complex))
        # the integrand decays faster than any power beyond T2; envelope * T2 bounds the tail
        tail = float(edge.max()) * T2 / (2 * math.pi)
        change = abs(value2 - value)
        scale = max(abs(value2), 1e-300)
        if change <= spec.tol * scale and tail <= spec.tol * scale:
            return ContourResult(value2, T2, change, tail)
        if abs(value2) == 0 and tail == 0:
            return ContourResult(0j, T2, 0.0, 0.0)
        if T2 >= spec.max_height:
            raise TruncationError(f"no truncation certificate up to height {T2:g}: change {change:.2e}, tail {tail:.2e}")
        T, value = T2, value2


def _mellin(psi: TestFunction, s):
    return np.asarray(psi.mellin(np.asarray(s, dtype=complex)), dtype=complex)


def zeta_zeta_integral(psi1: TestFunction, psi2: TestFunction, line: float = 1.0,
                       reflect: bool = True, tol: float = 1e-12, return_result: bool = False):
    """(1/2 pi i) int_{(line)} psi1~(-s or s) psi2~(s) zeta(1-s) zeta(1+s) ds.

    ``reflect=True`` uses psi1~(-s) (the diagonal form), ``False`` uses psi1~(s) (the off-diagonal form).
    """
    if not 0 < line < 3:
        raise ValueError("line must lie in (0, 3) where both zeta factors are certified")
    sign = -1 if reflect else 1

    def integrand(s):
        s = np.asarray(s, dtype=complex)
        return _mellin(psi1, sign * s) * _mellin(psi2, s) * zeta_array(1 - s) * zeta_array(1 + s)

    res = line_integral(ContourSpec(integrand, line, tol=tol))
    return res if return_result else res.value


def contour_B(psi1: TestFunction, psi2: TestFunction, tol: float = 1e-12) -> float:
    """(sqrt2 pi / 8) (1/2 pi i) int_{(1)} psi1~(-s) psi2~(s) zeta(1-s) zeta(1+s) ds."""
    val = SQRT2_PI / 8 * zeta_zeta_integral(psi1, psi2, 1.0, True, tol)
    if abs(val.imag) >= 1e-9:
        raise ArithmeticError(f"contour_B has imaginary part {val.imag:.3e}")
    return val.real


# ---------------------------------------------------------------------------
# diagonal and off-diagonal main terms

def diagonal_constants(dps: int = 50) -> dict:
    """The exact K^{3/2} constants as mpmath numbers at ``dps`` digits."""
    with mpmath.workdps(dps):
        r = mpmath.sqrt(2) * mpmath.pi
        return {
            "logK": r / 32,
            "logu": r / 64,
            "const": r / 16 * (mpmath.mpf(3) / 2 * mpmath.euler - mpmath.log(4 * mpmath.pi)),
            "deriv": r / 16,
            "contour_diag": r / 16,
            "contour_offdiag": r / 16,
            "contour_total": r / 8,
        }


def diagonal_residue_numeric(K, u, psi2_mellin: Callable, dps: int = 50, radius: float = 0.25):
    """Residue at s = 0 of (sqrt(2 pi)/16) (sqrt K u^{1/4} / 2 pi)^s Gamma(1/2 + s/2) zeta(1+s)^2 psi2~(s).

    Computed as a circle integral at ``dps`` digits; this is the per-u residue
    that the closed-form diagonal constants must reproduce.
    """
    with mpmath.workdps(dps):
        K, u = mpmath.mpf(K), mpmath.mpf(u)
        base = mpmath.sqrt(K) * mpmath.power(u, mpmath.mpf(1) / 4) / (2 * mpmath.pi)
        pref = mpmath.sqrt(2 * mpmath.pi) / 16

        def F(s):
            return pref * mpmath.power(base, s) * mpmath.gamma(mpmath.mpf(1) / 2 + s / 2) \
                * mpmath.zeta(1 + s) ** 2 * psi2_mellin(s)

        def on_circle(theta):
            s = radius * mpmath.expj(theta)
            return F(s) * s          # ds / (2 pi i) = s d theta / (2 pi)

        return mpmath.quad(on_circle, [0, mpmath.pi / 2, mpmath.pi, 3 * mpmath.pi / 2, 2 * mpmath.pi]) / (2 * mpmath.pi)


def diagonal_residue_formula(K, u, psi2_0, psi2_d0, dps: int = 50):
    """The same residue assembled from the closed-form constants (per unit psi1~(0) and h-weight)."""
    with mpmath.workdps(dps):
        c = diagonal_constants(dps)
        return (c["logK"] * mpmath.log(K) * psi2_0 + c["logu"] * mpmath.log(u) * psi2_0
                + c["const"] * psi2_0 + c["deriv"] * psi2_d0)


@dataclass
class VariancePrediction:
    """Coefficients of K^{3/2}; ``term_deriv`` is the psi1~(0) psi2~'(0) term, zero for even psi2 and left out of ``total``."""

    K: float
    term_logK: float
    term_logu: float
    term_const: float
    term_contour: float
    term_deriv: float = 0.0
    diag_contour: float = 0.0
    offdiag_contour: float = 0.0

    @property
    def total(self) -> float:
        return self.K ** 1.5 * (self.term_logK * math.log(self.K) + self.term_logu
                                + self.term_const + self.term_contour)

    total_thm = total

    @property
    def total_lemma(self) -> float:
        return self.total + self.K ** 1.5 * self.term_deriv

    @property
    def error_scale(self) -> float:
        """K^{5/4}, the size of the neglected terms (up to K^eps)."""
        return self.K ** 1.25

    @property
    def discrepancy(self) -> bool:
        return self.term_deriv != 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(total_thm=self.total, total_lemma=self.total_lemma,
                 error_scale=self.error_scale, discrepancy_flag=self.discrepancy)
        return d


def _kernel_moments(kernel: WeightKernel | None) -> tuple[float, float]:
    return (0.0, 0.0) if kernel is None else kernel.moments


def diagonal_main_term(psi1: TestFunction, psi2: TestFunction, kernel: WeightKernel | None, K: float,
                       contour: float | None = None) -> VariancePrediction:
    """Diagonal K^{3/2} coefficients; ``term_contour`` holds only the diagonal contour piece."""
    M0, M1 = _kernel_moments(kernel)
    p1, p2 = complex(psi1.mellin(0.0)).real, complex(psi2.mellin(0.0)).real
    d2 = complex(psi2.mellin_derivative(0.0)).real
    c = {k: float(v) for k, v in diagonal_constants(30).items()}
    if contour is None:
        contour = zeta_zeta_integral(psi1, psi2, 1.0, True).real if M0 else 0.0
    diag = c["contour_diag"] * contour * M0
    return VariancePrediction(K, c["logK"] * p1 * p2 * M0, c["logu"] * p1 * p2 * M1,
                              c["const"] * p1 * p2 * M0, diag, c["deriv"] * p1 * d2 * M0, diag_contour=diag)


def offdiagonal_main_term(psi1: TestFunction, psi2: TestFunction, kernel: WeightKernel | None, K: float,
                          eps: float = 0.25) -> float:
    """K^{3/2} (h-moment) (sqrt2 pi / 16) (1/2 pi i) int_{(eps)} psi1~(s) psi2~(s) zeta(1+s) zeta(1-s) ds."""
    M0 = _kernel_moments(kernel)[0]
    if M0 == 0.0:
        return 0.0
    val = zeta_zeta_integral(psi1, psi2, eps, reflect=False)
    return K ** 1.5 * M0 * SQRT2_PI / 16 * val.real


def diagstep6_term(psi1: TestFunction, psi2: TestFunction, kernel: WeightKernel | None, K: float) -> float:
    """The diagonal's contour piece K^{3/2} (h-moment) (sqrt2 pi / 16) (1/2 pi i) int_{(1)} ... ds."""
    M0 = _kernel_moments(kernel)[0]
    if M0 == 0.0:
        return 0.0
    return K ** 1.5 * M0 * SQRT2_PI / 16 * zeta_zeta_integral(psi1, psi2, 1.0, True).real


def prediction_contours(psi1: TestFunction, psi2: TestFunction, eps: float = 0.25) -> tuple[float, float]:
    """The K-independent line integrals: (1)-line with reflection, and the (eps)-line."""
    return (zeta_zeta_integral(psi1, psi2, 1.0, True).real,
            zeta_zeta_integral(psi1, psi2, eps, reflect=False).real)


def variance_prediction(psi1: TestFunction, psi2: TestFunction, kernel: WeightKernel | None,
                        K: float, contours: tuple[float, float] | None = None) -> VariancePrediction:
    """Diagonal terms plus the off-diagonal contour term (computed on its own line).

    ``contours`` reuses a result of prediction_contours across several K.
    """
    M0 = _kernel_moments(kernel)[0]
    if contours is None:
        pred = diagonal_main_term(psi1, psi2, kernel, K)
        off = offdiagonal_main_term(psi1, psi2, kernel, K) / K ** 1.5 if M0 else 0.0
    else:
        pred = diagonal_main_term(psi1, psi2, kernel, K, contour=contours[0])
        off = M0 * SQRT2_PI / 16 * contours[1]
    pred.offdiag_contour = off
    pred.term_contour = pred.diag_contour + off
    return pred


# ---------------------------------------------------------------------------
# hbar^Re_w and its Mellin transform

def hbar_re_mellin(kernel: WeightKernel, w: complex, s: complex, variant: str = "explicit") -> complex:
    """Mellin transform int_0^inf hbar^Re_w(v) v^{s-1} dv.

    ``explicit``: Gamma(s) cos(pi s / 2) int h(sqrt u) / sqrt(2 pi u) u^{w/2 - s} du (0 < Re s < 1).
    ``displayed``: the same without u^{-s}.
    ``quadrature``: direct numerical Mellin transform (any Re s > 0).
    """
    s = complex(s)
    if variant == "quadrature":
        return _hbar_re_mellin_quadrature(kernel, w, s)
    if not 0 < s.real < 1:
        raise ValueError("explicit formula needs 0 < Re s < 1")
    expo = w - 2 * s if variant == "explicit" else w
    if variant not in ("explicit", "displayed"):
        raise ValueError(f"unknown variant {variant!r}")
    t, wt = panel_nodes(np.linspace(*kernel.support, 65), 24)
    moment = complex(np.sum(kernel.h(t) * wt * t ** expo)) * math.sqrt(2 / math.pi)
    gam = complex(np.exp(loggamma(s)))
    return gam * complex(np.cos(np.pi * s / 2)) * moment


def _hbar_re_mellin_quadrature(kernel: WeightKernel, w: complex, s: complex, vmax: float = 400.0) -> complex:
    if s.real <= 0:
        raise ValueError("Mellin integral diverges for Re s <= 0")
    # v < 1 in x = log v, where the integrand decays like e^{x Re s}
    xlo = math.log(1e-16) / s.real - 2
    x, wx = panel_nodes(np.linspace(xlo, 0.0, int(-xlo) + 1), 16)
    v_small = np.exp(x)
    f_small = kernel.transform(v_small, weight=lambda t: t ** w, phase="cos")
    part1 = np.sum(f_small * np.exp(s * x) * wx)
    v, wv = panel_nodes(np.linspace(1.0, vmax, int(vmax)), 16)
    f_big = kernel.transform(v, weight=lambda t: t ** w, phase="cos")
    part2 = np.sum(f_big * v ** (s - 1) * wv)
    return complex(part1 + part2)


def hbar_re_decay(kernel: WeightKernel, w: complex, vs, j: int = 0) -> np.ndarray:
    """|d^j/dv^j hbar^Re_w(v)| on ``vs`` (derivatives fall on cos(uv) as powers of -u)."""
    vs = np.asarray(vs, dtype=float)

    def weight(t):
        return t ** w * t ** (2 * j)

    phase = "cos"
    vals = kernel.transform(vs, weight=weight, phase=phase if j % 2 == 0 else "exp")
    return np.abs(vals if j % 2 == 0 else vals.imag)


# ---------------------------------------------------------------------------
# misc checks

def gamma_ratio_check(k: float, s: complex) -> float:
    """|Gamma(k+s) / Gamma(k) k^{-s} - 1|."""
    s = complex(s)
    if s == 0:
        return 0.0
    with mpmath.workdps(30):
        val = mpmath.exp(mpmath.loggamma(k + s) - mpmath.loggamma(k) - s * mpmath.log(k))
        return float(abs(val - 1))


def gamma_ratio_bound(k: float, s: complex, C: float = 5.0) -> float:
    return C * (1 + abs(s)) ** 2 / k


def inverse_mellin(psi: TestFunction, y, sigma: float = 0.5, T: float | None = None, panel: float = 0.25) -> np.ndarray:
    """psi(y) recovered as (1/2 pi) int psi~(sigma + i t) y^{sigma + i t} dt."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if T is None:
        a, b = psi.log_support()
        T = 60.0 / max(b - a, 1e-3) * 8
    t, w = panel_nodes(np.linspace(-T, T, int(2 * T / panel) + 1), 16)
    s = sigma + 1j * t
    vals = _mellin(psi, s) * w
    return np.real(np.exp(np.outer(np.log(y), s)) @ vals) / (2 * math.pi)
