"""Level-one cusp forms: q-expansions, Hecke eigenforms, Petersson norms.

Exact arithmetic (integer q-series, rational Hecke matrices) is done with
python-flint; eigenvalues are refined in mpmath.  Downstream numerics use the
Deligne-normalized eigenvalues ``lambda(n) = a(n) / n^((k-1)/2)`` as floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import flint
import mpmath
import numpy as np
from scipy import special

from .quadrature import gl_rule

DEFAULT_PRECISION = 192


class PrecisionError(RuntimeError):
    """Raised when a requested accuracy cannot be certified."""


class MissingPrimeError(KeyError):
    """An eigenvalue at a prime outside the stored range was requested."""


# ---------------------------------------------------------------------------
# dimensions and elementary arithmetic

def _check_weight(k: int) -> None:
    if k % 2 or k < 4:
        raise ValueError(f"weight must be an even integer >= 4, got {k}")


def dim_modular(k: int) -> int:
    _check_weight(k)
    return k // 12 + (0 if k % 12 == 2 else 1)


def dim_cusp(k: int) -> int:
    return dim_modular(k) - 1


@lru_cache(maxsize=8)
def smallest_prime_factor(n: int) -> np.ndarray:
    spf = np.zeros(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if spf[p] == 0:
            spf[p::p][spf[p::p] == 0] = p
    return spf


def primes_up_to(n: int) -> list[int]:
    if n < 2:
        return []
    spf = smallest_prime_factor(n)
    return [int(p) for p in np.nonzero(spf[2:] == np.arange(2, n + 1))[0] + 2]


def factorize(n: int) -> dict[int, int]:
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _sigma_series(r: int, N: int) -> list[int]:
    s = [0] * (N + 1)
    for d in range(1, N + 1):
        dr = d ** r
        for m in range(d, N + 1, d):
            s[m] += dr
    return s


# ---------------------------------------------------------------------------
# q-expansions

@dataclass(frozen=True)
class QExpansion:
    """Truncated q-expansion ``sum c(n) q^n`` with exact rational coefficients."""

    weight: int
    coeffs: tuple

    def __post_init__(self):
        _check_weight(self.weight)
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))

    @property
    def truncation(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_cusp(self) -> bool:
        return self.coeffs[0] == 0

    def __getitem__(self, n: int) -> Fraction:
        if n > self.truncation:
            raise IndexError(f"coefficient q^{n} beyond truncation {self.truncation}")
        return self.coeffs[n]

    def __add__(self, other: "QExpansion") -> "QExpansion":
        if other.weight != self.weight:
            raise ValueError("weights differ")
        n = min(len(self.coeffs), len(other.coeffs))
        return QExpansion(self.weight, [a + b for a, b in zip(self.coeffs[:n], other.coeffs[:n])])

    def scale(self, c) -> "QExpansion":
        c = Fraction(c)
        return QExpansion(self.weight, [c * a for a in self.coeffs])


def _trunc(p: flint.fmpz_poly, N: int) -> flint.fmpz_poly:
    return p.truncate(N + 1) if p.degree() > N else p


@lru_cache(maxsize=16)
def _base_series(N: int):
    """E4, E6 and Delta as integer polynomials mod q^(N+1)."""
    e4 = flint.fmpz_poly([1] + [240 * s for s in _sigma_series(3, N)[1:]])
    e6 = flint.fmpz_poly([1] + [-504 * s for s in _sigma_series(5, N)[1:]])
    # Jacobi: eta^3 / q^(1/8) = sum (-1)^m (2m+1) q^(m(m+1)/2)
    jac = [0] * (N + 1)
    m = 0
    while m * (m + 1) // 2 <= N:
        jac[m * (m + 1) // 2] = (-1) ** m * (2 * m + 1)
        m += 1
    j8 = flint.fmpz_poly(jac).pow_trunc(8, N)
    delta = _trunc(j8.left_shift(1), N)
    return e4, e6, delta


def _monomial(N: int, a: int, b: int, j: int) -> flint.fmpz_poly:
    e4, e6, delta = _base_series(N)
    out = delta.pow_trunc(j, N + 1) if j else flint.fmpz_poly([1])
    if a:
        out = out.mul_low(e4.pow_trunc(a, N + 1), N + 1)
    if b:
        out = out.mul_low(e6, N + 1)
    return _trunc(out, N)


def _coeff_list(p: flint.fmpz_poly, N: int) -> list[int]:
    c = [int(x) for x in p.coeffs()]
    return (c + [0] * (N + 1 - len(c)))[: N + 1]


def _cusp_basis_int(k: int, N: int) -> list[list[int]]:
    d = dim_cusp(k)
    if d == 0:
        return []
    polys = []
    for j in range(1, d + 1):
        r = k - 12 * j
        a, b = (r // 4, 0) if r % 4 == 0 else ((r - 6) // 4, 1)
        polys.append(_monomial(N, a, b, j))
    # Delta^j E4^a E6^b = q^j + ..., so the leading block is unitriangular over Z
    for i in range(d - 1, -1, -1):
        for j in range(i + 1, d):
            c = int(polys[i].coeffs()[j + 1]) if polys[i].length() > j + 1 else 0
            if c:
                polys[i] = polys[i] - c * polys[j]
    return [_coeff_list(p, N) for p in polys]


def victor_miller_basis(k: int, N: int) -> list[QExpansion]:
    """Echelon basis of S_k: the i-th element is q^i + O(q^(dim+1))."""
    _check_weight(k)
    d = dim_cusp(k)
    if d and N < d:
        raise ValueError(f"truncation {N} below dimension {d}")
    return [QExpansion(k, c) for c in _cusp_basis_int(k, N)]


def hecke_matrix(k: int, p: int, N: int | None = None) -> list[list[Fraction]]:
    """Matrix of T_p on the echelon basis; row i holds (T_p b_i)(1..dim)."""
    d = dim_cusp(k)
    if N is None:
        N = p * d
    if N < p * d:
        raise ValueError(f"T_{p} needs truncation >= {p * d}")
    basis = _cusp_basis_int(k, N)
    pk = p ** (k - 1)
    rows = []
    for b in basis:
        rows.append([Fraction(b[p * n] + (pk * b[n // p] if n % p == 0 else 0))
                     for n in range(1, d + 1)])
    return rows


# ---------------------------------------------------------------------------
# eigenforms

@dataclass(frozen=True)
class HeckeEigenform:
    """Normalized Hecke eigenform of level one with a(1) = 1."""

    weight: int
    index: int
    lambda_primes: dict = field(repr=False)
    petersson_norm: float = float("nan")
    sym2_L1: float = float("nan")
    precision: int = DEFAULT_PRECISION
    lambda_exact: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def lambda_2(self) -> float:
        return self.lambda_primes[2]

    @property
    def prime_bound(self) -> int:
        return max(self.lambda_primes) if self.lambda_primes else 1

    def coefficient(self, n: int) -> float:
        """Arithmetically normalized a(n)."""
        return hecke_eigenvalue(self, n) * n ** ((self.weight - 1) / 2)


def _charpoly_t2(k: int) -> tuple[list[list[Fraction]], flint.fmpz_poly]:
    M = hecke_matrix(k, 2)
    d = len(M)
    fm = flint.fmpq_mat(d, d, [flint.fmpq(x.numerator, x.denominator) for row in M for x in row])
    cp = fm.charpoly()
    den = cp.denom()
    return M, flint.fmpz_poly([int(c * den) for c in cp.coeffs()])


def _newton(cpf, dcpf, x, prec: int):
    tol = mpmath.mpf(2) ** (-prec + 16)
    for _ in range(400):
        step = mpmath.polyval(cpf, x) / mpmath.polyval(dcpf, x)
        x -= step
        if abs(step) <= tol * abs(x):
            return x
    raise PrecisionError("Newton refinement of a T_2 eigenvalue did not converge")


def _eigen_coefficients(k: int, N: int, prec: int) -> list[tuple[mpmath.mpf, list]]:
    """(a(2), [a(n)]_{n<=N}) per eigenform, sorted by a(2)."""
    M, cp = _charpoly_t2(k)
    d = len(M)
    if d == 0:
        return []
    roots = cp.complex_roots()
    if any(m > 1 for _, m in roots) or len(roots) != d:
        raise PrecisionError(f"repeated T_2 eigenvalue in weight {k}")
    basis = _cusp_basis_int(k, N)
    out = []
    # charpoly coefficients and basis entries grow like 2^(k d); extra bits absorb the cancellation
    work = prec + 4 * k
    with mpmath.workprec(work):
        cpf = [mpmath.mpf(int(c)) for c in reversed(cp.coeffs())]
        dcpf = [c * (len(cpf) - 1 - i) for i, c in enumerate(cpf[:-1])]
        for r, _ in roots:
            lam = _newton(cpf, dcpf, mpmath.mpf(float(r.real)), work)
            # left eigenvector c with c_1 = 1: c^T (M - lam I) = 0
            A = mpmath.matrix(d, d)
            for i in range(d):
                for j in range(d):
                    A[j, i] = mpmath.mpf(M[i][j].numerator) / M[i][j].denominator - (lam if i == j else 0)
            if d == 1:
                c = [mpmath.mpf(1)]
            else:
                rhs = -A[:, 0]
                sub = A[:, 1:]
                sol = mpmath.qr_solve(sub, rhs)[0]
                c = [mpmath.mpf(1)] + [sol[i] for i in range(d - 1)]
            a = [mpmath.mpf(0)] * (N + 1)
            for ci, b in zip(c, basis):
                for n in range(1, N + 1):
                    if b[n]:
                        a[n] += ci * b[n]
            out.append((lam, a))
    out.sort(key=lambda t: t[0])
    return out


def eigenforms(k: int, N: int, prec: int = DEFAULT_PRECISION, with_norms: bool = True) -> list[HeckeEigenform]:
    """All normalized eigenforms of weight k, with lambda(p) for primes p <= N."""
    _check_weight(k)
    d = dim_cusp(k)
    if d == 0:
        return []
    if N < 2 * d + 2:
        raise ValueError(f"truncation {N} too small for dimension {d}")
    need = _terms_needed(k, math.sqrt(3) / 2, 1e-13)
    if with_norms and N < need:
        # the norm needs more coefficients than requested; borrow it from a deeper run
        deep = eigenforms(k, need, prec, True)
        return [HeckeEigenform(k, g.index, {p: v for p, v in g.lambda_primes.items() if p <= N},
                               g.petersson_norm, g.sym2_L1, prec,
                               {p: v for p, v in g.lambda_exact.items() if p <= N}) for g in deep]
    forms = []
    for idx, (_, a) in enumerate(_eigen_coefficients(k, N, prec)):
        with mpmath.workprec(prec):
            lam_mp = {p: a[p] / mpmath.power(p, mpmath.mpf(k - 1) / 2) for p in primes_up_to(N)}
        f = HeckeEigenform(k, idx, {p: float(v) for p, v in lam_mp.items()},
                           precision=prec, lambda_exact=lam_mp)
        if with_norms:
            pn = petersson_norm(f)
            f = HeckeEigenform(k, idx, f.lambda_primes, pn, _sym2_from_norm(k, pn), prec, lam_mp)
        forms.append(f)
    return forms


@lru_cache(maxsize=128)
def cached_eigenforms(k: int, N: int) -> tuple[HeckeEigenform, ...]:
    return tuple(eigenforms(k, N))


def _prime_power_lambda(lp: float, e: int) -> float:
    prev, cur = 1.0, lp
    if e == 0:
        return 1.0
    for _ in range(e - 1):
        prev, cur = cur, lp * cur - prev
    return cur


def hecke_eigenvalue(f: HeckeEigenform, n: int) -> float:
    """lambda_f(n) by multiplicativity and the prime-power recursion."""
    if n < 1:
        raise ValueError("n must be positive")
    out = 1.0
    for p, e in factorize(n).items():
        if p not in f.lambda_primes:
            raise MissingPrimeError(p)
        out *= _prime_power_lambda(f.lambda_primes[p], e)
    return out


def lambda_table(f: HeckeEigenform, N: int) -> np.ndarray:
    """Array ``lam`` with ``lam[n] = lambda_f(n)`` for 1 <= n <= N (``lam[0] = 0``)."""
    if N > f.prime_bound and any(p > f.prime_bound for p in primes_up_to(N)):
        raise MissingPrimeError(next(p for p in primes_up_to(N) if p > f.prime_bound))
    return _multiplicative_table(N, lambda p, e: _prime_power_lambda(f.lambda_primes[p], e))


def _multiplicative_table(N: int, local) -> np.ndarray:
    spf = smallest_prime_factor(max(N, 2))
    out = np.zeros(N + 1)
    if N >= 1:
        out[1] = 1.0
    for n in range(2, N + 1):
        p = int(spf[n])
        m, e = n, 0
        while m % p == 0:
            m //= p
            e += 1
        out[n] = out[m] * local(p, e)
    return out


# ---------------------------------------------------------------------------
# Petersson norm

def _sym2_from_norm(k: int, norm: float) -> float:
    return math.exp(math.log(2 * math.pi ** 2) + (k - 1) * math.log(4 * math.pi)
                    + math.log(norm) - math.lgamma(k))


def _arith_coefficients(f, nmax: int) -> np.ndarray:
    if isinstance(f, QExpansion):
        if not f.is_cusp:
            raise ValueError("Petersson norm requires a cusp form")
        if nmax > f.truncation:
            raise PrecisionError(
                f"q-expansion truncated at {f.truncation}, norm needs {nmax} terms")
        return np.array([float(c) for c in f.coeffs[: nmax + 1]])
    lam = lambda_table(f, nmax)
    n = np.arange(nmax + 1, dtype=float)
    return lam * n ** ((f.weight - 1) / 2)


def _terms_needed(k: int, y: float, rtol: float) -> int:
    # |a(n)| e^{-2 pi n y} with |a(n)| <= d(n) n^{(k-1)/2}: walk until below rtol of the peak
    n, peak = 1, 0.0
    while True:
        t = 0.5 * (k + 1) * math.log(n) - 2 * math.pi * n * y
        peak = max(peak, t)
        if t < peak + math.log(rtol) - 10 and n > k:
            return n
        n += 1


def petersson_norm(f, rtol: float = 1e-13, order: int = 48) -> float:
    """<F, F> = int_{SL2(Z)\\H} |F|^2 y^k dx dy / y^2 for the given normalization.

    The region y >= 1 is integrated exactly termwise; the remaining cap
    |x| <= 1/2, sqrt(1 - x^2) <= y <= 1 uses a tensor Gauss-Legendre rule.
    """
    k = f.weight
    nmax = _terms_needed(k, math.sqrt(3) / 2, rtol)
    a = _arith_coefficients(f, nmax)
    n = np.arange(1, nmax + 1)
    # rescale by S = max |a(n)| e^{-2 pi n sqrt3/2} so |F|^2 stays in double range at large k
    with np.errstate(divide="ignore"):
        log_a = np.log(np.abs(a[1:]))
    log_S = float(np.max(log_a - 2 * np.pi * n * math.sqrt(3) / 2))
    a_s = a[1:] * np.exp(-log_S)
    # int_1^inf e^{-4 pi n y} y^{k-2} dy = Gamma(k-1, 4 pi n) / (4 pi n)^{k-1}
    x = 4 * np.pi * n
    with np.errstate(divide="ignore"):
        log_tail = np.log(special.gammaincc(k - 1, x)) + special.gammaln(k - 1) - (k - 1) * np.log(x)
        upper = math.fsum(np.exp(2 * log_a - 2 * log_S + log_tail)[np.isfinite(log_a + log_tail)])

    def cap(order):
        gx, gw = gl_rule(order)
        xs = 0.25 * (gx + 1)              # x in [0, 1/2], symmetric in x
        wx = 0.25 * gw
        lo = np.sqrt(1 - xs ** 2)
        ys = lo[:, None] + 0.5 * (1 - lo)[:, None] * (gx[None, :] + 1)
        wy = 0.5 * (1 - lo)[:, None] * gw[None, :]
        z = xs[:, None] + 1j * ys
        q = np.exp(2j * np.pi * z[..., None] * n)
        F = q @ a_s
        dens = np.abs(F) ** 2 * ys ** (k - 2)
        return 2 * math.fsum((dens * wy * wx[:, None]).ravel())

    c1, c2 = cap(order), cap(2 * order)
    total = upper + c2
    if abs(c1 - c2) > 10 * rtol * total:
        raise PrecisionError(f"cap quadrature did not converge: {c1} vs {c2}")
    return total * math.exp(2 * log_S)


def sym2_L1(f: HeckeEigenform) -> float:
    """L(1, sym^2 f) from the Petersson norm of the a(1) = 1 normalization."""
    norm = f.petersson_norm if math.isfinite(f.petersson_norm) else petersson_norm(f)
    return _sym2_from_norm(f.weight, norm)


# ---------------------------------------------------------------------------
# cache

def eigen_cache_dict(k: int, forms: Sequence[HeckeEigenform], digits: int = 30) -> dict:
    def s(x):
        return mpmath.nstr(x, digits, strip_zeros=False) if isinstance(x, mpmath.mpf) else repr(float(x))
    return {
        "k": k,
        "dim": dim_cusp(k),
        "precision": digits,
        "eigenforms": [
            {
                "lambda_2": s(f.lambda_exact.get(2, f.lambda_2)),
                "lambda_primes": {str(p): s(f.lambda_exact.get(p, v)) for p, v in sorted(f.lambda_primes.items())},
                "petersson_norm": repr(f.petersson_norm),
                "sym2_L1": repr(f.sym2_L1),
            }
            for f in forms
        ],
    }


def write_eigen_cache(path, k: int, forms: Sequence[HeckeEigenform]) -> None:
    with open(path, "w") as fh:
        json.dump(eigen_cache_dict(k, forms), fh, indent=1)


def read_eigen_cache(path) -> list[HeckeEigenform]:
    with open(path) as fh:
        data = json.load(fh)
    k = int(data["k"])
    prec = int(math.ceil(int(data.get("precision", 17)) * 3.33))
    out = []
    for i, e in enumerate(data["eigenforms"]):
        lam = {int(p): float(v) for p, v in e["lambda_primes"].items()}
        exact = {int(p): mpmath.mpf(v) for p, v in e["lambda_primes"].items()}
        out.append(HeckeEigenform(k, i, lam, float(e["petersson_norm"]), float(e["sym2_L1"]), prec, exact))
    if len(out) != data["dim"]:
        raise ValueError("cache dimension mismatch")
    return out


def even_weights(lo: int, hi: int) -> Iterable[int]:
    return (k for k in range(max(lo, 4) + (max(lo, 4) % 2), hi + 1, 2))
