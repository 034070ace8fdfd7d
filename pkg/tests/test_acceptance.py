"""Acceptance suite: one PASS/FAIL line per criterion, collected in the terminal summary."""

import math
import time

import mpmath
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from vertvar import geodesic_measure as gm
from vertvar.asymptotics import (SQRT2_PI, contour_B, diagonal_constants, diagonal_main_term, diagstep6_term,
                                 functional_equation_residual, inverse_mellin, offdiagonal_main_term,
                                 variance_prediction, zeta_zeta_integral)
from vertvar.exp_sums import quadruple_sum, totient, weil_check
from vertvar.harness import ExperimentConfig, run_experiment, trend_ratio
from vertvar.hecke_forms import cached_eigenforms, lambda_table
from vertvar.oscillatory import compare_point, sample_points
from vertvar.testfunctions import Bump, LogGaussian
from vertvar.trace_formula import WeightKernel, averaged_petersson_sides, classical_petersson_check


def record(label, passed, detail):
    line = f"CRITERION {label}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_01_quadruple_identity():
    t = time.perf_counter()
    bad = [c for c in range(1, 51) if abs(quadruple_sum(c) - c ** 3 * totient(c)) >= 1e-6]
    elapsed = time.perf_counter() - t
    ok = not bad and elapsed <= 300
    record("1", ok, f"c <= 50, mismatches {bad}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_weil_bound():
    rng = np.random.default_rng(2024)
    triples = [(int(rng.integers(1, 10 ** 6)), int(rng.integers(1, 10 ** 6)), int(rng.integers(1, 501)))
               for _ in range(500)]
    rep = weil_check(triples)
    ok = rep.passed and rep.checked == 500
    record("2", ok, f"{rep.checked} triples, {len(rep.violations)} violations, max ratio {rep.max_ratio:.3f}")
    assert ok


def test_criterion_03_hecke_structure():
    t = time.perf_counter()
    worst_rel, deligne_bad, forms = 0.0, 0, 0
    d = np.zeros(1001, dtype=int)
    for i in range(1, 1001):
        d[i::i] += 1
    for k in range(12, 42, 2):
        for f in cached_eigenforms(k, 1000):
            forms += 1
            lam = lambda_table(f, 1000)
            deligne_bad += int(np.sum(np.abs(lam[1:1001]) > d[1:1001] * (1 + 1e-9)))
            for m in range(2, 1001):
                for n in range(m, 1000 // m + 1):
                    g = math.gcd(m, n)
                    rhs = math.fsum(lam[m * n // (e * e)] for e in range(1, g + 1) if g % e == 0)
                    err = abs(lam[m] * lam[n] - rhs)
                    worst_rel = max(worst_rel, err / max(abs(rhs), 1e-3))
    elapsed = time.perf_counter() - t
    ok = deligne_bad == 0 and worst_rel <= 1e-9 and elapsed <= 120
    record("3", ok, f"{forms} eigenforms k <= 40, Deligne violations {deligne_bad}, "
                    f"worst Hecke error {worst_rel:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_classical_petersson():
    t = time.perf_counter()
    worst = 0.0
    for k in (12, 16, 18, 20, 22, 24, 26):
        for m in range(1, 11):
            for n in range(1, 11):
                worst = max(worst, abs(classical_petersson_check(k, m, n).residual))
    elapsed = time.perf_counter() - t
    ok = worst < 1e-8 and elapsed <= 120
    record("4", ok, f"max residual {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_averaged_petersson():
    kernel = WeightKernel()
    fails, worst = [], 0.0
    for K in (12, 16, 20):
        for m in range(1, 6):
            for n in range(1, 6):
                rep = averaged_petersson_sides(m, n, K, kernel, constant=10.0)
                worst = max(worst, rep.details.get("implied_constant", 0.0))
                if not rep.passed:
                    fails.append((m, n, K))
    ok = not fails
    record("5", ok, f"{75 - len(fails)}/75 within constant 10, worst implied constant {worst:.1f}")
    assert ok


def test_criterion_06_decomposition_identity():
    rows, fails = [], 0
    for k in (12, 16, 18, 20):
        for f in cached_eigenforms(k, 2000):
            for psi in (Bump(2.0), LogGaussian(0.5)):
                rep = gm.decomposition_check(f, psi, e_method="direct")
                exact = rep.mu - rep.expected - rep.e_term - gm.shifted_sum_S(f, psi, method="exact")
                rows.append((k, abs(rep.residual), rep.tolerance, abs(exact)))
                fails += abs(rep.residual) > rep.tolerance
    worst = max(rows, key=lambda r: r[1] / r[2])
    ok = fails == 0
    record("6", ok, f"{len(rows) - fails}/{len(rows)} within 1e-2 k^-1/2; worst k={worst[0]} residual "
                    f"{worst[1]:.2e} vs {worst[2]:.2e}; with the exact shifted sum max {max(r[3] for r in rows):.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_07_stationary_phase():
    within, total, worst_exact, worst_res, worst = 0, 0, 0.0, 0.0, 0.0
    for K in (500, 2000):
        for pt in sample_points(K, 50, seed=7):
            cmp = compare_point(pt)
            total += 1
            within += cmp.rel_error <= 0.1
            worst = max(worst, cmp.rel_error)
            worst_exact = max(worst_exact, cmp.rel_error_exact)
            worst_res = max(worst_res, cmp.stationary_residual)
    ok = within == total and worst_res < 1e-8
    record("7", ok, f"{within}/{total} within 10% (max {worst:.2f}); exact-amplitude variant max "
                    f"{worst_exact:.3f}; max stationary residual {worst_res:.1e}")
    assert ok


def test_criterion_08_offdiagonal_matches_diagonal():
    kernel = WeightKernel()
    worst = 0.0
    pairs = [(LogGaussian(0.5), LogGaussian(1.0)), (LogGaussian(0.5), LogGaussian(0.5)),
             (LogGaussian(0.7, 2.0), LogGaussian(0.4))]
    for a, b in pairs:
        off = offdiagonal_main_term(a, b, kernel, 100.0)
        diag = diagstep6_term(a, b, kernel, 100.0)
        worst = max(worst, abs(off - diag) / abs(diag))
    ok = worst <= 1e-10
    record("8", ok, f"max relative difference {worst:.1e} over {len(pairs)} even pairs")
    assert ok


def test_criterion_09_contour_engine():
    rng = np.random.default_rng(9)
    pts = [complex(rng.uniform(0.05, 0.95), rng.uniform(-50, 50)) for _ in range(20)]
    fe = max(functional_equation_residual(s) for s in pts)
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    # change of the truncated integral between the last two heights T and 2T; the bump pair decays slowly
    res = zeta_zeta_integral(a, b, 1.0, True, return_result=True)
    assert contour_B(a, b) == pytest.approx(SQRT2_PI / 8 * res.value.real, rel=1e-15)
    slow = zeta_zeta_integral(Bump(2.0), Bump(2.0), 1.0, True, tol=1e-10, return_result=True)
    cb = max(res.change / abs(res.value), slow.change / abs(slow.value))
    y = np.exp(np.linspace(-1.2, 1.2, 13))
    rt = float(np.max(np.abs(inverse_mellin(a, y) - a(y))))
    ok = fe < 1e-10 and cb < 1e-8 and rt < 1e-8
    record("9", ok, f"FE residual {fe:.1e}; contour_B change under doubling (T up to {slow.height:g}) {cb:.1e}; "
                    f"Mellin round trip {rt:.1e}")
    assert ok


def test_criterion_10a_exact_constants():
    c = diagonal_constants(50)
    with mpmath.workdps(50):
        r = mpmath.sqrt(2) * mpmath.pi
        want = {"logK": r / 32, "logu": r / 64, "const": r / 16 * (3 * mpmath.euler / 2 - mpmath.log(4 * mpmath.pi)),
                "contour_total": r / 8}
        err = max(abs(c[key] - v) for key, v in want.items())
    kernel = WeightKernel()
    a, b = LogGaussian(0.5), LogGaussian(1.0)
    M0, M1 = kernel.moments
    p = diagonal_main_term(a, b, kernel, 100.0)
    pa, pb = complex(a.mellin(0)).real, complex(b.mellin(0)).real
    assembly = max(abs(p.term_logK - float(want["logK"]) * pa * pb * M0),
                   abs(p.term_logu - float(want["logu"]) * pa * pb * M1),
                   abs(p.term_const - float(want["const"]) * pa * pb * M0))
    full = variance_prediction(a, b, kernel, 100.0)
    split = abs(full.term_contour - (full.diag_contour + full.offdiag_contour))
    ok = err < mpmath.mpf(10) ** -45 and assembly < 1e-15 and split < 1e-15
    record("10a", ok, f"50-digit constant error {float(err):.1e}; assembly error {assembly:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_10b_trend_band():
    t = time.perf_counter()
    reports = run_experiment(ExperimentConfig(thread_count=1))
    elapsed = time.perf_counter() - t
    trend = trend_ratio(reports)
    finite = all(math.isfinite(r.empirical_M) and math.isfinite(r.empirical_lhs) for r in reports)
    ok = finite and elapsed <= 1800
    # only NaN or coverage errors fail the run; a band miss is reported, not asserted
    record("10b", ok, f"empirical_M(24)/empirical_M(12) = {trend['ratio']:.3f}, band {trend['band']} "
                      f"{'hit' if trend['in_band'] else 'MISSED (diagnostic)'}; run {elapsed:.0f}s")
    assert ok
