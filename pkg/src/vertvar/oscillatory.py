"""Stationary phase for one-dimensional oscillatory integrals.

General integrals are  int amplitude(t) e(phase(t) / modulus) dt  over an
interval J, with e(z) = exp(2 pi i z).  The off-diagonal integral I_v uses the
phase

    f(x, n2, m1, m2) = 2 sqrt(x (x+m1) n2 (n2+m2)) - 2 x n2 - x m2 - n2 m1,

which suffers catastrophic cancellation in the naive form, so it is evaluated
through p = 2x + m1, q = 2 n2 + m2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy
from scipy.optimize import brentq

from .quadrature import panel_nodes
from .testfunctions import Bump, TestFunction
from .trace_formula import DEFAULT_WINDOW, WeightKernel, Window, hbar_star

TWO_PI = 2 * math.pi


class NoStationaryPoint(ValueError):
    def __init__(self, msg, trivial_bound=None):
        super().__init__(msg)
        self.trivial_bound = trivial_bound


class MultipleStationaryPoints(ValueError):
    pass


class ResolutionError(RuntimeError):
    def __init__(self, msg, required_nodes=None):
        super().__init__(msg)
        self.required_nodes = required_nodes


# ---------------------------------------------------------------------------
# generic stationary phase

@dataclass
class PhaseSpec:
    """int amplitude(t) e(phase(t) / modulus) dt over ``interval``.

    X, Y, V, V1, Q are the size parameters of the stationary-phase estimate; they
    are only needed for admissibility and error budgets.
    """

    phase: Callable
    amplitude: Callable
    interval: tuple
    dphase: Callable | None = None
    d2phase: Callable | None = None
    modulus: float = 1.0
    X: float = math.nan
    Y: float = math.nan
    V: float = math.nan
    V1: float = math.nan
    Q: float = math.nan
    guess: float | None = None      # analytic stationary point, if known

    @property
    def Z(self) -> float:
        return self.Q + self.X + self.Y + self.V1 + 1

    def violations(self) -> list[str]:
        out = []
        if any(math.isnan(p) for p in (self.X, self.Y, self.V, self.V1, self.Q)):
            return ["size parameters not set"]
        if self.Y < self.Z ** (3 / 20):
            out.append(f"Y = {self.Y:.4g} < Z^(3/20) = {self.Z ** 0.15:.4g}")
        low = self.Q * self.Z ** (1 / 40) / math.sqrt(self.Y)
        if not self.V1 >= self.V >= low:
            out.append(f"need V1 >= V >= Q Z^(1/40) / sqrt(Y) = {low:.4g}")
        return out

    def f1(self, t):
        if self.dphase is not None:
            return self.dphase(t)
        h = 1e-6 * max(1.0, abs(t))
        return (self.phase(t + h) - self.phase(t - h)) / (2 * h)

    def f2(self, t):
        if self.d2phase is not None:
            return self.d2phase(t)
        h = 1e-4 * max(1.0, abs(t))
        return (self.phase(t + h) - 2 * self.phase(t) + self.phase(t - h)) / (h * h)


@dataclass
class StationaryResult:
    value: complex
    error_budget: float
    t0: float
    f2: float
    trivial_bound: float

    def to_dict(self):
        d = asdict(self)
        d["value"] = [self.value.real, self.value.imag]
        return d


def find_stationary_point(spec: PhaseSpec, grid: int = 400) -> float:
    """Unique zero of f' in the interior of J, by sign-change scan then Brent."""
    a, b = spec.interval
    if spec.guess is not None and a < spec.guess < b:
        # bracket around the analytic seed; the scan below confirms uniqueness
        lo, hi = max(a, 0.9 * spec.guess), min(b, 1.1 * spec.guess)
        if lo < hi and np.sign(spec.f1(lo)) != np.sign(spec.f1(hi)):
            root = brentq(spec.f1, lo, hi, xtol=1e-14 * abs(spec.guess), rtol=1e-15, maxiter=200)
        else:
            root = None
    else:
        root = None
    ts = np.linspace(a, b, grid + 1)
    d = np.array([spec.f1(t) for t in ts])
    flips = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
    exact = np.nonzero(d == 0)[0]
    count = len(flips) + len(exact)
    if count == 0 and root is None:
        raise NoStationaryPoint("no stationary point in J", trivial_bound(spec))
    if count > 1:
        raise MultipleStationaryPoints(f"{count} stationary points in J")
    if root is None:
        if len(exact):
            root = float(ts[exact[0]])
        else:
            i = flips[0]
            root = brentq(spec.f1, ts[i], ts[i + 1], xtol=1e-14 * max(1.0, abs(ts[i])), rtol=1e-15)
    return float(root)


def trivial_bound(spec: PhaseSpec) -> float:
    """X Q / sqrt(Y) + 1."""
    return spec.X * spec.Q / math.sqrt(spec.Y) + 1 if spec.Y > 0 else math.inf


def error_budget(spec: PhaseSpec, constant: float = 10.0) -> float:
    """constant * Q^(3/2) X / Y^(3/2) * (V^-2 + Y^(2/3) / Q^2)."""
    Q, X, Y, V = spec.Q, spec.X, spec.Y, spec.V
    return constant * Q ** 1.5 * X / Y ** 1.5 * (V ** -2 + Y ** (2 / 3) / Q ** 2)


def stationary_leading_term(spec: PhaseSpec, constant: float = 10.0,
                            require_admissible: bool = False) -> StationaryResult:
    """e^{sgn(f'') pi i / 4} e(f(t0)) / sqrt|f''(t0)| * amplitude(t0), phase scaled by 1/modulus."""
    if require_admissible:
        bad = spec.violations()
        if bad:
            raise ValueError("; ".join(bad))
    t0 = find_stationary_point(spec)
    f2 = spec.f2(t0) / spec.modulus
    fval = spec.phase(t0) / spec.modulus
    amp = complex(np.asarray(spec.amplitude(np.array([t0])))[0])
    lead = np.exp(1j * np.sign(f2) * math.pi / 4) * np.exp(2j * math.pi * fval) / math.sqrt(abs(f2)) * amp
    budget = error_budget(spec, constant) if not math.isnan(spec.Q) else math.nan
    tb = trivial_bound(spec) if not math.isnan(spec.Q) else math.nan
    return StationaryResult(complex(lead), budget, t0, f2, tb)


def _panel_edges(spec: PhaseSpec, min_panels: int, periods_per_panel: float) -> np.ndarray:
    a, b = spec.interval
    probe = np.linspace(a, b, 4 * min_panels + 1)
    freq = np.abs(np.array([spec.f1(t) for t in probe])) / spec.modulus
    edges = [a]
    base = (b - a) / min_panels
    while edges[-1] < b:
        t = edges[-1]
        f = float(np.interp(t, probe, freq))
        f = max(f, float(np.interp(min(b, t + base), probe, freq)))
        step = base if f == 0 else min(base, periods_per_panel / f)
        edges.append(min(b, t + step))
    return np.array(edges)


def direct_oscillatory_quadrature(spec: PhaseSpec, rtol: float = 1e-9, order: int = 16,
                                  min_panels: int = 32, max_nodes: int = 2 ** 22,
                                  return_error: bool = False):
    """Gauss-Legendre panels of at most two local periods (>= 8 nodes per period), node doubling."""
    edges = _panel_edges(spec, min_panels, 2.0)

    def rule(e):
        t, w = panel_nodes(e, order)
        amp = np.asarray(spec.amplitude(t), dtype=complex)
        ph = np.array([spec.phase(x) for x in t]) if not _vectorized(spec.phase) else spec.phase(t)
        return complex(np.sum(w * amp * np.exp(2j * math.pi * np.asarray(ph) / spec.modulus)))

    prev = rule(edges)
    while True:
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[1:] + edges[:-1])]))
        cur = rule(edges)
        err = abs(cur - prev)
        if err <= rtol * max(abs(cur), 1e-300) or abs(cur) < 1e-300:
            return (cur, err) if return_error else cur
        if (len(edges) - 1) * order > max_nodes:
            raise ResolutionError(f"no convergence with {(len(edges) - 1) * order} nodes",
                                  required_nodes=2 * (len(edges) - 1) * order)
        prev = cur


def _vectorized(fn) -> bool:
    try:
        out = fn(np.array([1.0, 2.0]))
        return np.shape(out) == (2,)
    except Exception:
        return False


# ---------------------------------------------------------------------------
# the off-diagonal phase

def _pq(x, n2, m1, m2):
    x = np.asarray(x, dtype=float)
    p = 2 * x + m1
    q = 2.0 * n2 + m2
    A = p * p - m1 * m1          # 4 x (x + m1)
    B = q * q - m2 * m2          # 4 n2 (n2 + m2)
    return p, q, A, B


def phase_f(x, n2, m1, m2):
    p, q, A, B = _pq(x, n2, m1, m2)
    root = np.sqrt(A * B)
    return (m1 * m1 * m2 * m2 - (p * m2) ** 2 - (q * m1) ** 2) / (2 * (root + p * q)) + m1 * m2 / 2


def phase_f_naive(x, n2, m1, m2):
    """Direct formula, for cross-checks only."""
    x = np.asarray(x, dtype=float)
    return 2 * np.sqrt(x * (x + m1) * n2 * (n2 + m2)) - 2 * x * n2 - x * m2 - n2 * m1


def phase_f1(x, n2, m1, m2):
    p, q, A, B = _pq(x, n2, m1, m2)
    return (m1 * m1 * q * q - m2 * m2 * p * p) / (np.sqrt(A) * (p * np.sqrt(B) + q * np.sqrt(A)))


def phase_f2(x, n2, m1, m2):
    x = np.asarray(x, dtype=float)
    return -(m1 * m1 / 2) * np.sqrt(n2 * (n2 + m2) / (x * (x + m1)) ** 3)


@lru_cache(maxsize=None)
def _symbolic_derivative(order: int):
    x, n2, m1, m2 = sympy.symbols("x n2 m1 m2", positive=True)
    f = 2 * sympy.sqrt(x * (x + m1) * n2 * (n2 + m2)) - 2 * x * n2 - x * m2 - n2 * m1
    expr = sympy.diff(f, x, order)
    return sympy.lambdify((x, n2, m1, m2), sympy.simplify(expr), "numpy")


def phase_derivatives(x, n2, m1, m2, order: int):
    """d^order f / dx^order; closed forms for order <= 2, symbolic differentiation beyond."""
    if order == 0:
        return phase_f(x, n2, m1, m2)
    if order == 1:
        return phase_f1(x, n2, m1, m2)
    if order == 2:
        return phase_f2(x, n2, m1, m2)
    return _symbolic_derivative(order)(np.asarray(x, dtype=float), n2, m1, m2)


def phase_taylor(x, n2, m1, m2):
    """Leading terms of f for x, n2 large against m1, m2."""
    return (-n2 * m1 ** 2 / (4 * x) - x * m2 ** 2 / (4 * n2) + m1 * m2 / 2
            - m1 ** 2 * m2 / (8 * x) - m2 ** 2 * m1 / (8 * n2))


def _disc(v, n2, m2):
    D = (v + m2) ** 2 + 4 * v * n2
    if D <= 0:
        raise ValueError(f"(v+m2)^2 + 4 v n2 = {D} <= 0: no stationary point")
    return D


def stationary_point(v, n2, m1, m2) -> float:
    """Solution of f'(x) = v."""
    D = _disc(v, n2, m2)
    return (m1 / 2) * (-1 + (v + m2 + 2 * n2) / math.sqrt(D))


def stationary_point_approx(v, n2, m1, m2) -> float:
    return m1 * n2 / math.sqrt(_disc(v, n2, m2))


def second_derivative_at_stationary(v, n2, m1, m2) -> float:
    D = _disc(v, n2, m2)
    return -D ** 1.5 / (2 * m1 * n2 * (n2 + m2))


def stationary_phase_value(v, n2, m1, m2, a1=0) -> float:
    """f(x*) - v (x* - a1), the e_c-argument at the stationary point."""
    D = _disc(v, n2, m2)
    return a1 * v + (m1 / 2) * (v + m2 - math.sqrt(D))


# ---------------------------------------------------------------------------
# I_v

@dataclass(frozen=True)
class OffDiagonalPoint:
    n2: int
    m1: int
    m2: int
    d1: int
    d2: int
    c: int
    v: int
    K: float
    a1: int = 0

    def violations(self, window: Window = DEFAULT_WINDOW) -> list[str]:
        try:
            x = stationary_point(self.v, self.n2, self.m1, self.m2)
        except ValueError as exc:
            return [str(exc)]
        return window.violations(self.K, self.d1, self.d2, x, self.n2, self.m1, self.m2, self.c)

    def to_dict(self):
        return asdict(self)


@dataclass
class OffDiagonalKernels:
    kernel: WeightKernel = field(default_factory=WeightKernel)
    psi1: TestFunction = field(default_factory=Bump)
    psi2: TestFunction = field(default_factory=Bump)


def _amplitude(pt: OffDiagonalPoint, ker: OffDiagonalKernels, x, exact: bool = True):
    """hbar*(arg) / (d1 d2 (x (x+m1) n2 (n2+m2))^{3/4}); ``exact=False`` uses x n2 in place of the products."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if exact:
        prod = np.sqrt(x * (x + pt.m1) * pt.n2 * (pt.n2 + pt.m2))
    else:
        prod = x * pt.n2
    arg = pt.c * pt.K ** 2 / (8 * math.pi * prod)
    hs = hbar_star(ker.kernel, ker.psi1, ker.psi2, pt.d1, pt.d2, x, pt.n2, pt.m1, pt.m2, pt.K, v=arg)
    return np.asarray(hs) / (pt.d1 * pt.d2 * prod ** 1.5)


def x_support(pt: OffDiagonalPoint, ker: OffDiagonalKernels) -> tuple[float, float]:
    """x-range where psi1(t K / (2 pi d1 (x + m1))) can be non-zero, t in supp h."""
    t0, t1 = ker.kernel.support
    la, lb = ker.psi1.log_support()
    lo = t0 * pt.K / (TWO_PI * pt.d1 * math.exp(lb)) - pt.m1
    hi = t1 * pt.K / (TWO_PI * pt.d1 * math.exp(la)) - pt.m1
    return max(lo, 1e-9), hi


def I_v_phase_spec(pt: OffDiagonalPoint, ker: OffDiagonalKernels, exact: bool = True) -> PhaseSpec:
    """The I_v integrand as a PhaseSpec (phase f(x) - v (x - a1), modulus c), with the size parameters."""
    n2, m1, m2, v = pt.n2, pt.m1, pt.m2, pt.v
    K, d1, c = pt.K, pt.d1, pt.c
    eps = DEFAULT_WINDOW.eps
    return PhaseSpec(
        phase=lambda x: phase_f(x, n2, m1, m2) - v * (np.asarray(x) - pt.a1),
        amplitude=lambda x: _amplitude(pt, ker, x, exact),
        interval=x_support(pt, ker),
        dphase=lambda x: float(phase_f1(x, n2, m1, m2)) - v,
        d2phase=lambda x: float(phase_f2(x, n2, m1, m2)),
        modulus=c,
        X=d1 ** 1.5 * n2 ** -1.5 * K ** -0.5,
        Y=m1 ** 2 * n2 * d1 / (c * K),
        V=K ** (1 - eps) / d1,
        V1=K ** (1 - eps) / d1,
        Q=K / d1,
        guess=stationary_point(v, n2, m1, m2),
    )


def I_v_leading(pt: OffDiagonalPoint, ker: OffDiagonalKernels | None = None, exact: bool = False) -> complex:
    """Leading stationary-phase term of I_v.

    ``exact=False`` gives the simplified closed form with x*^{3/2} n2^{3/2};
    ``exact=True`` keeps (x*(x*+m1) n2(n2+m2))^{3/4} and the exact hbar* argument.
    """
    ker = ker or OffDiagonalKernels()
    x = stationary_point(pt.v, pt.n2, pt.m1, pt.m2)
    f2 = second_derivative_at_stationary(pt.v, pt.n2, pt.m1, pt.m2)
    phase = np.exp(2j * math.pi * stationary_phase_value(pt.v, pt.n2, pt.m1, pt.m2, pt.a1) / pt.c)
    amp = complex(_amplitude(pt, ker, x, exact)[0])
    return complex(phase * np.exp(-1j * math.pi / 4) * math.sqrt(pt.c) / math.sqrt(abs(f2)) * amp)


def I_0_closed_form(pt: OffDiagonalPoint, ker: OffDiagonalKernels | None = None) -> complex:
    """e^{-pi i/4} sqrt(2c) / (m1 n2^2) hbar*(c K^2 m2 / (8 pi n2^2 m1)) / (d1 d2) at v = 0."""
    ker = ker or OffDiagonalKernels()
    x = pt.m1 * pt.n2 / pt.m2
    arg = pt.c * pt.K ** 2 * pt.m2 / (8 * math.pi * pt.n2 ** 2 * pt.m1)
    hs = hbar_star(ker.kernel, ker.psi1, ker.psi2, pt.d1, pt.d2, x, pt.n2, pt.m1, pt.m2, pt.K, v=arg)
    return complex(np.exp(-1j * math.pi / 4) * math.sqrt(2 * pt.c) / (pt.m1 * pt.n2 ** 2) * hs / (pt.d1 * pt.d2))


def I_v_direct(pt: OffDiagonalPoint, ker: OffDiagonalKernels | None = None, rtol: float = 1e-9,
               return_error: bool = False):
    """Direct quadrature of I_v."""
    ker = ker or OffDiagonalKernels()
    return direct_oscillatory_quadrature(I_v_phase_spec(pt, ker), rtol=rtol, return_error=return_error)


def stationary_residual(pt: OffDiagonalPoint) -> float:
    """|f'(x*) - v| / max(|v|, |f'-scale|) at the closed-form stationary point."""
    x = stationary_point(pt.v, pt.n2, pt.m1, pt.m2)
    scale = max(abs(pt.v), pt.m1 ** 2 * pt.n2 / (4 * x * x), pt.m2 ** 2 / (4 * pt.n2))
    return abs(float(phase_f1(x, pt.n2, pt.m1, pt.m2)) - pt.v) / scale


# ---------------------------------------------------------------------------
# sampling admissible points

def sample_points(K: float, count: int, seed: int = 7, ker: OffDiagonalKernels | None = None,
                  window: Window = DEFAULT_WINDOW, v_range: int = 2, max_c: int = 3,
                  m_top: float | None = None, min_amplitude: float = 0.1,
                  max_tries: int = 100000) -> list[OffDiagonalPoint]:
    """Seeded admissible points: window conditions, size-parameter admissibility, and x* inside J.

    x* must sit where |amplitude(x*)| >= min_amplitude * max |amplitude| on J.
    """
    ker = ker or OffDiagonalKernels()
    rng = np.random.default_rng(seed)
    top = m_top if m_top is not None else K ** 0.5
    lo_m1 = K ** 0.125
    dmax = max(1, int(K ** (1 / 32)))
    la, lb = ker.psi2.log_support()
    t0, t1 = ker.kernel.support
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"only {len(out)} admissible points after {max_tries} draws")
        d1, d2 = (int(rng.integers(1, dmax + 1)) for _ in range(2))
        c = int(rng.integers(1, max_c + 1))
        m1 = int(round(math.exp(rng.uniform(math.log(lo_m1), math.log(top)))))
        m2 = int(round(math.exp(rng.uniform(0.0, math.log(top)))))
        t = rng.uniform(t0, t1)
        y = math.exp(rng.uniform(la, lb))
        n2 = int(round(t * K / (TWO_PI * d2 * y))) - m2
        v = int(rng.integers(-v_range, v_range + 1))
        if n2 < 1 or m1 < 1:
            continue
        pt = OffDiagonalPoint(n2, m1, m2, d1, d2, c, v, K, a1=int(rng.integers(0, c)))
        if pt.violations(window):
            continue
        spec = I_v_phase_spec(pt, ker)
        if spec.violations():
            continue
        a, b = spec.interval
        x = spec.guess
        if not a < x < b:
            continue
        grid = np.linspace(a, b, 201)
        amp = np.abs(spec.amplitude(grid))
        if abs(spec.amplitude(np.array([x]))[0]) < min_amplitude * amp.max():
            continue
        try:
            find_stationary_point(spec)
        except (NoStationaryPoint, MultipleStationaryPoints):
            continue
        out.append(pt)
    return out


@dataclass
class PhaseComparison:
    point: dict
    leading: complex
    leading_exact: complex
    direct: complex
    rel_error: float
    rel_error_exact: float
    stationary_residual: float

    def to_dict(self):
        d = asdict(self)
        for key in ("leading", "leading_exact", "direct"):
            z = getattr(self, key)
            d[key] = [z.real, z.imag]
        return d


def compare_point(pt: OffDiagonalPoint, ker: OffDiagonalKernels | None = None) -> PhaseComparison:
    ker = ker or OffDiagonalKernels()
    direct = I_v_direct(pt, ker)
    lead = I_v_leading(pt, ker)
    lead_x = I_v_leading(pt, ker, exact=True)
    scale = abs(direct)
    return PhaseComparison(pt.to_dict(), lead, lead_x, direct, abs(lead - direct) / scale,
                           abs(lead_x - direct) / scale, stationary_residual(pt))
