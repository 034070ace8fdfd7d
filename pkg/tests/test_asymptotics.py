import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from vertvar.asymptotics import (SQRT2_PI, ContourSpec, TruncationError, contour_B, diagonal_constants,
                                 diagonal_main_term, diagonal_residue_formula, diagonal_residue_numeric,
                                 diagstep6_term, functional_equation_residual, gamma_ratio_bound, gamma_ratio_check,
                                 hbar_re_decay, hbar_re_mellin, line_integral, offdiagonal_main_term,
                                 prediction_contours, variance_prediction, zeta_zeta_integral)
from vertvar.testfunctions import LogGaussian, Zero, mean_zero_log_gaussian
from vertvar.trace_formula import WeightKernel
from vertvar.zeta import zeta_array, zeta_line

# scipy quad of the same integrand with closed-form Mellin transforms and mpmath zeta
J_HALF_ONE = -0.33257339070478265
J_HALF_HALF = -0.007500895996939691


def test_functional_equation():
    rng = np.random.default_rng(11)
    for _ in range(20):
        s = complex(rng.uniform(-3, 4), rng.uniform(-40, 40))
        assert functional_equation_residual(s) < 1e-20


def test_zeta_special_values():
    assert complex(zeta_line(2.0)) == pytest.approx(math.pi ** 2 / 6, rel=1e-15)
    assert complex(zeta_line(-1.0)) == pytest.approx(-1 / 12, rel=1e-15)
    s = np.array([0.5 + 14.134725141734693j, 2.0 + 0j, 1.5 + 3j])
    ref = [complex(mpmath.zeta(z)) for z in s]
    assert zeta_array(s) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_zeta_zeta_integral_frozen():
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    assert zeta_zeta_integral(a, b, 1.0, True).real == pytest.approx(J_HALF_ONE, rel=1e-12)
    assert zeta_zeta_integral(a, a, 1.0, True).real == pytest.approx(J_HALF_HALF, rel=1e-11)
    # for even test functions the double pole at 0 has zero residue, so the line can move
    assert zeta_zeta_integral(a, a, 0.25, False).real == pytest.approx(J_HALF_HALF, rel=1e-11)


def test_zeta_zeta_integral_scipy_oracle():
    a, b = LogGaussian(0.5), LogGaussian(0.8, 1.0, 0.1)

    def integrand(t):
        s = 1.0 + 1j * t
        val = complex(a.mellin(-s)) * complex(b.mellin(s)) * complex(mpmath.zeta(1 - s)) * complex(mpmath.zeta(1 + s))
        return val

    re, _ = integrate.quad(lambda t: integrand(t).real, -40, 40, epsabs=1e-14, limit=400)
    im, _ = integrate.quad(lambda t: integrand(t).imag, -40, 40, epsabs=1e-14, limit=400)
    got = zeta_zeta_integral(a, b, 1.0, True)
    assert got == pytest.approx((re + 1j * im) / (2 * math.pi), abs=1e-11)


def test_contour_B_symmetric_and_stable():
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    assert contour_B(a, b) == pytest.approx(SQRT2_PI / 8 * J_HALF_ONE, rel=1e-12)
    assert contour_B(a, b) == pytest.approx(contour_B(b, a), rel=1e-12)
    assert contour_B(a, b, tol=1e-14) == pytest.approx(contour_B(a, b), rel=1e-12)


def test_line_integral_truncation():
    gauss = ContourSpec(lambda s: np.exp(np.asarray(s) ** 2), line=0.0)
    # (1/2 pi) int e^{-t^2} dt
    assert line_integral(gauss).value == pytest.approx(1 / (2 * math.sqrt(math.pi)), rel=1e-12)
    slow = ContourSpec(lambda s: 1 / (1.5 - np.asarray(s) ** 2), line=0.0, max_height=200.0)
    with pytest.raises(TruncationError):
        line_integral(slow)
    with pytest.raises(ValueError):
        zeta_zeta_integral(LogGaussian(0.5), LogGaussian(0.5), line=0.0)


def test_diagonal_constants_high_precision():
    c = diagonal_constants(50)
    with mpmath.workdps(50):
        r = mpmath.sqrt(2) * mpmath.pi
        assert abs(c["logK"] - r / 32) < mpmath.mpf(10) ** -48
        assert abs(c["logu"] - r / 64) < mpmath.mpf(10) ** -48
        assert abs(c["const"] - r / 16 * (1.5 * mpmath.euler - mpmath.log(4 * mpmath.pi))) < mpmath.mpf(10) ** -48
        assert abs(c["contour_total"] - (c["contour_diag"] + c["contour_offdiag"])) < mpmath.mpf(10) ** -48
    assert float(c["const"]) == pytest.approx(-0.4623932499426158, rel=1e-14)


@pytest.mark.parametrize("K,u", [(100, 1.5), (5000, 3.2), (1e6, 1.0)])
def test_diagonal_residue_numeric_vs_formula(K, u):
    sig, cen = mpmath.mpf("0.6"), mpmath.mpf("0.15")
    with mpmath.workdps(50):
        def mel(s):
            return sig * mpmath.sqrt(mpmath.pi) * mpmath.exp(s * s * sig * sig / 4 - s * cen)

        p0 = mel(mpmath.mpf(0))
        d0 = -cen * p0
        numeric = diagonal_residue_numeric(K, u, mel)
        formula = diagonal_residue_formula(K, u, p0, d0)
        assert abs(numeric - formula) < mpmath.mpf(10) ** -40 * max(1, abs(formula))


def test_offdiagonal_equals_diagonal_contour_for_even_pair():
    k = WeightKernel()
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    assert offdiagonal_main_term(a, b, k, 64) == pytest.approx(diagstep6_term(a, b, k, 64), rel=1e-10)


def test_prediction_contours_reused():
    k = WeightKernel()
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    contours = prediction_contours(a, b)
    for K in (50, 400):
        p = variance_prediction(a, b, k, K)
        q = variance_prediction(a, b, k, K, contours=contours)
        assert q.total == pytest.approx(p.total, rel=1e-12)


def test_mean_zero_collapse():
    k = WeightKernel()
    z = mean_zero_log_gaussian()
    assert abs(complex(z.mellin(0.0))) < 1e-15
    p = variance_prediction(z, LogGaussian(0.5), k, 100)
    assert p.term_logK == pytest.approx(0.0, abs=1e-15)
    assert p.term_logu == pytest.approx(0.0, abs=1e-15)
    assert p.term_const == pytest.approx(0.0, abs=1e-15)
    assert p.term_deriv == pytest.approx(0.0, abs=1e-15)
    assert p.total == pytest.approx(100 ** 1.5 * p.term_contour, rel=1e-12)


def test_zero_kernel_and_zero_function():
    zero_h = WeightKernel(h=lambda t: np.zeros_like(np.asarray(t, dtype=float)), name="zero")
    a = LogGaussian(0.5)
    p = variance_prediction(a, a, zero_h, 100)
    assert p.total == 0.0 and p.total_lemma == 0.0
    q = variance_prediction(Zero(), a, WeightKernel(), 100)
    assert q.total == 0.0


def test_K_scaling_and_deriv_term():
    k = WeightKernel()
    a, b = LogGaussian(0.5), LogGaussian(0.7, 1.0, 0.2)
    p1, p2 = variance_prediction(a, b, k, 100), variance_prediction(a, b, k, 400)
    # total / K^{3/2} is affine in log K with slope term_logK
    slope = (p2.total / 400 ** 1.5 - p1.total / 100 ** 1.5) / math.log(4)
    assert slope == pytest.approx(p1.term_logK, rel=1e-12)
    assert p1.discrepancy and p1.term_deriv != 0
    d = complex(b.mellin_derivative(0.0)).real
    assert d == pytest.approx(-0.2 * 0.7 * math.sqrt(math.pi), rel=1e-10)
    assert p1.total_lemma - p1.total == pytest.approx(100 ** 1.5 * p1.term_deriv, rel=1e-12)
    assert diagonal_main_term(a, a, k, 100).term_deriv == 0.0


def test_prediction_to_dict():
    d = variance_prediction(LogGaussian(0.5), LogGaussian(1.0), WeightKernel(), 64).to_dict()
    assert d["total_thm"] == pytest.approx(d["total_lemma"])
    assert d["error_scale"] == pytest.approx(64 ** 1.25)
    assert d["discrepancy_flag"] is False


@pytest.mark.parametrize("w", [0.0, 1 + 0.3j])
@pytest.mark.parametrize("s", [0.3, 0.5 + 1j])
def test_hbar_re_mellin_explicit_vs_quadrature(w, s):
    k = WeightKernel()
    assert hbar_re_mellin(k, w, s) == pytest.approx(hbar_re_mellin(k, w, s, "quadrature"), rel=1e-10)


def test_hbar_re_mellin_displayed_variant_differs():
    k = WeightKernel()
    a, b = hbar_re_mellin(k, 0.0, 0.5), hbar_re_mellin(k, 0.0, 0.5, "displayed")
    assert abs(a - b) > 0.05 * abs(a)
    with pytest.raises(ValueError):
        hbar_re_mellin(k, 0.0, 1.5)
    with pytest.raises(ValueError):
        hbar_re_mellin(k, 0.0, 0.5, "bogus")


@pytest.mark.parametrize("j", [0, 1, 2])
def test_hbar_re_decay(j):
    k = WeightKernel()
    vs = np.geomspace(10, 1000, 60)
    vals = hbar_re_decay(k, 0.5, vs, j)
    assert np.all(np.isfinite(vals))
    assert float(np.max(vals * vs ** 3)) < 1e3


def test_gamma_ratio():
    assert gamma_ratio_check(50, 0) == 0.0
    for k in (24, 100, 1000):
        for s in (0.5, 1 + 1j, -0.3 + 4j):
            assert gamma_ratio_check(k, s) <= gamma_ratio_bound(k, s)
    ref = abs(mpmath.gamma(101) / mpmath.gamma(100) / 100 - 1)
    assert gamma_ratio_check(100, 1) == pytest.approx(float(ref), rel=1e-12)
