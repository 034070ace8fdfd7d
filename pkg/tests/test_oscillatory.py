import dataclasses
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from vertvar.oscillatory import (MultipleStationaryPoints, NoStationaryPoint, OffDiagonalKernels, OffDiagonalPoint,
                                 PhaseSpec,
                                 ResolutionError, I_0_closed_form, I_v_direct, I_v_leading, I_v_phase_spec,
                                 compare_point, direct_oscillatory_quadrature, find_stationary_point, phase_derivatives,
                                 phase_f, phase_f1, phase_f2, phase_f_naive, phase_taylor, sample_points,
                                 second_derivative_at_stationary, stationary_leading_term, stationary_phase_value,
                                 stationary_point, stationary_point_approx, stationary_residual, trivial_bound)
from vertvar.testfunctions import Bump


def bump_at(center, width):
    b = Bump(2.0)
    scale = width / math.log(2)
    return lambda t: b.profile((np.asarray(t, dtype=float) - center) / scale)


def quad_complex(fn, a, b):
    re, _ = integrate.quad(lambda t: fn(t).real, a, b, epsabs=1e-13, limit=2000)
    im, _ = integrate.quad(lambda t: fn(t).imag, a, b, epsabs=1e-13, limit=2000)
    return re + 1j * im


# ---------------------------------------------------------------------------
# generic stationary phase

def test_quadratic_phase_leading_term():
    amp = bump_at(5.0, 2.0)
    spec = PhaseSpec(phase=lambda t: (np.asarray(t) - 5) ** 2, amplitude=amp, interval=(3.0, 7.0))
    res = stationary_leading_term(spec)
    assert res.t0 == pytest.approx(5.0, abs=1e-10)
    assert res.f2 == pytest.approx(2.0, rel=1e-6)
    assert res.value == pytest.approx(np.exp(1j * math.pi / 4) * float(amp(5.0)) / math.sqrt(2), rel=1e-6)


def test_quadratic_phase_large_parameter_against_quadrature():
    lam = 100.0
    amp = bump_at(5.0, 2.0)
    spec = PhaseSpec(phase=lambda t: lam * (np.asarray(t) - 5) ** 2, amplitude=amp, interval=(3.0, 7.0))
    lead = stationary_leading_term(spec).value
    direct = direct_oscillatory_quadrature(spec, rtol=1e-11)
    ref = quad_complex(lambda t: complex(amp(t)) * np.exp(2j * math.pi * lam * (t - 5) ** 2), 3.0, 7.0)
    assert direct == pytest.approx(ref, abs=1e-9)
    # the next term is O(1/lam) relative to the leading term
    assert abs(lead - direct) < 5 / lam * abs(lead)


def test_negative_curvature_sign():
    amp = bump_at(0.0, 1.0)
    spec = PhaseSpec(phase=lambda t: -3 * np.asarray(t) ** 2, amplitude=amp, interval=(-1.0, 1.0))
    res = stationary_leading_term(spec)
    assert res.f2 < 0
    assert np.angle(res.value) == pytest.approx(-math.pi / 4, abs=1e-8)


def test_gaussian_zero_phase():
    spec = PhaseSpec(phase=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                     amplitude=lambda t: np.exp(-np.asarray(t) ** 2 / 0.25), interval=(-6.0, 6.0))
    assert direct_oscillatory_quadrature(spec, rtol=1e-12) == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-12)


def test_fresnel_node_doubling_stable():
    spec = PhaseSpec(phase=lambda t: np.asarray(t) ** 2, amplitude=bump_at(0.0, 3.0), interval=(-3.0, 3.0),
                     modulus=1 / 50)
    a = direct_oscillatory_quadrature(spec, rtol=1e-9)
    b = direct_oscillatory_quadrature(spec, rtol=1e-12)
    assert a == pytest.approx(b, rel=1e-9)


def test_zero_amplitude():
    spec = PhaseSpec(phase=lambda t: np.asarray(t) ** 2, amplitude=lambda t: np.zeros_like(np.asarray(t)),
                     interval=(-1.0, 1.0))
    assert direct_oscillatory_quadrature(spec) == 0
    assert stationary_leading_term(spec).value == 0


def test_no_and_multiple_stationary_points():
    lin = PhaseSpec(phase=lambda t: 3 * np.asarray(t), amplitude=bump_at(0, 1), interval=(-1.0, 1.0),
                    X=1.0, Y=4.0, V=1.0, V1=1.0, Q=1.0)
    with pytest.raises(NoStationaryPoint) as exc:
        find_stationary_point(lin)
    assert exc.value.trivial_bound == pytest.approx(1.5)
    wavy = PhaseSpec(phase=lambda t: np.cos(np.asarray(t)), amplitude=bump_at(0, 1), interval=(-1.0, 8.0))
    with pytest.raises(MultipleStationaryPoints):
        find_stationary_point(wavy)


def test_resolution_error():
    # a jump at an irrational point keeps the panel rule from converging
    spec = PhaseSpec(phase=lambda t: 3 * np.asarray(t) ** 2,
                     amplitude=lambda t: (np.asarray(t) > 1 / math.pi).astype(float), interval=(-1.0, 1.0))
    with pytest.raises(ResolutionError) as exc:
        direct_oscillatory_quadrature(spec, rtol=1e-14, max_nodes=4096)
    assert exc.value.required_nodes > 4096


# ---------------------------------------------------------------------------
# the off-diagonal phase

POINTS = [(1e4, 300, 40, 25), (350.0, 118, 18, 11), (2e5, 900, 60, 50), (80.0, 20, 3, 7)]


@pytest.mark.parametrize("x,n2,m1,m2", POINTS)
def test_stable_phase_matches_naive(x, n2, m1, m2):
    assert phase_f(x, n2, m1, m2) == pytest.approx(phase_f_naive(x, n2, m1, m2), rel=1e-6)


@pytest.mark.parametrize("x,n2,m1,m2", POINTS)
def test_derivatives_against_finite_differences(x, n2, m1, m2):
    h = 1e-5 * x
    fd1 = (phase_f(x + h, n2, m1, m2) - phase_f(x - h, n2, m1, m2)) / (2 * h)
    fd2 = (phase_f1(x + h, n2, m1, m2) - phase_f1(x - h, n2, m1, m2)) / (2 * h)
    assert phase_f1(x, n2, m1, m2) == pytest.approx(fd1, rel=1e-6)
    assert phase_f2(x, n2, m1, m2) == pytest.approx(fd2, rel=1e-6)
    assert phase_derivatives(x, n2, m1, m2, 3) == pytest.approx(
        (phase_f2(x + h, n2, m1, m2) - phase_f2(x - h, n2, m1, m2)) / (2 * h), rel=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.floats(10, 1e5), st.integers(5, 2000), st.integers(1, 60), st.integers(1, 60))
def test_second_derivative_negative_and_sized(x, n2, m1, m2):
    f2 = float(phase_f2(x, n2, m1, m2))
    assert f2 < 0
    if x >= m1 and n2 >= m2:
        ratio = abs(f2) / (m1 * m1 * n2 / x ** 3)
        assert 1 / (4 * math.sqrt(2)) * (1 - 1e-12) <= ratio <= 1 / math.sqrt(2) * (1 + 1e-12)
        if x >= 4 * m1:
            assert 0.25 <= ratio <= 4


def test_taylor_expansion():
    n2, m1, m2 = 5000, 7, 5
    for x in (3e3, 1e4, 4e4):
        err = abs(phase_taylor(x, n2, m1, m2) - phase_f(x, n2, m1, m2))
        cubic = n2 * m1 ** 3 / (8 * x * x) + x * m2 ** 3 / (8 * n2 * n2)
        assert err == pytest.approx(cubic, rel=0.05)


@pytest.mark.parametrize("n2,m1,m2", [(118, 18, 11), (400, 5, 30), (2000, 40, 3)])
def test_stationary_point_at_v_zero(n2, m1, m2):
    x = stationary_point(0, n2, m1, m2)
    assert x == pytest.approx(m1 * n2 / m2, rel=1e-14)
    assert stationary_point_approx(0, n2, m1, m2) == pytest.approx(x, rel=1e-14)
    assert stationary_phase_value(0, n2, m1, m2) == pytest.approx(0.0, abs=1e-12)
    assert float(phase_f(x, n2, m1, m2)) == pytest.approx(0.0, abs=1e-9)
    assert abs(second_derivative_at_stationary(0, n2, m1, m2)) == pytest.approx(
        m2 ** 3 / (2 * m1 * n2 * (n2 + m2)), rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(-3, 3), st.integers(20, 3000), st.integers(1, 50), st.integers(1, 50))
def test_stationary_equation_and_value(v, n2, m1, m2):
    assume((v + m2) ** 2 + 4 * v * n2 > 0)
    x = stationary_point(v, n2, m1, m2)
    assume(x > 0)
    pt = OffDiagonalPoint(n2, m1, m2, 1, 1, 1, v, 100.0)
    assert stationary_residual(pt) < 1e-8
    assert second_derivative_at_stationary(v, n2, m1, m2) == pytest.approx(float(phase_f2(x, n2, m1, m2)), rel=1e-9)
    ref = float(phase_f(x, n2, m1, m2)) - v * x
    assert stationary_phase_value(v, n2, m1, m2) == pytest.approx(ref, rel=1e-8, abs=1e-8)


# ---------------------------------------------------------------------------
# I_v

@pytest.fixture(scope="module")
def points():
    return sample_points(500, 4, seed=7)


def test_sampler_reproducible(points):
    assert sample_points(500, 4, seed=7) == points
    for pt in points:
        assert pt.violations() == []
        assert I_v_phase_spec(pt, OffDiagonalKernels()).violations() == []


def test_leading_term_against_direct(points):
    for pt in points:
        cmp = compare_point(pt)
        assert cmp.stationary_residual < 1e-8
        assert cmp.rel_error_exact < 0.1
        assert cmp.rel_error < 0.7
        assert cmp.to_dict()["direct"] == [cmp.direct.real, cmp.direct.imag]


def test_direct_within_trivial_bound(points):
    for pt in points:
        spec = I_v_phase_spec(pt, OffDiagonalKernels())
        value = abs(I_v_direct(pt))
        assert value <= trivial_bound(spec) - 1
        grid = np.linspace(*spec.interval, 2001)
        sup = float(np.max(np.abs(spec.amplitude(grid))))
        assert value <= sup * (spec.interval[1] - spec.interval[0])


def test_v_zero_closed_form_ratio(points):
    # only points whose x* stays inside the amplitude support at v = 0
    for pt in [p for p in points if p.v == 0]:
        p0 = dataclasses.replace(pt, a1=0)
        ratio = I_v_leading(p0) / I_0_closed_form(p0)
        assert ratio == pytest.approx(math.sqrt(1 + p0.m2 / p0.n2), rel=1e-12)
