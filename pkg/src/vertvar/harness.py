"""End-to-end variance experiments over weights k with h((k-1)/K) != 0.

For each K the harness forms

    lhs = sum_k h((k-1)/K) sum_f L(1, sym^2 f) D_f(psi1) D_f(psi2),   D = mu_f - E,

and splits each D into its diagonal part E_psi and off-diagonal part S_psi,
so lhs = M + cross + EE with M the S-only sum.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import geodesic_measure as gm
from .asymptotics import VariancePrediction, prediction_contours, variance_prediction
from .hecke_forms import cached_eigenforms, dim_cusp
from .testfunctions import TestFunction, from_config
from .trace_formula import WeightKernel

THREADS_ENV = "VERTVAR_THREADS"
DEFAULT_PSI = {"kind": "bump", "params": {"radius": 2.0}}
CSV_COLUMNS = ["K", "empirical_lhs", "empirical_M", "pred_logK_term", "pred_logu_term",
               "pred_const_term", "pred_contour_term", "pred_total_thm", "pred_total_lemma"]


class CoverageError(gm.CoverageError):
    def __init__(self, shortfalls: list[dict]):
        self.shortfalls = shortfalls
        lines = [f"K={s['K']} k={s['k']}: need {s['need']}, cache {s['have']}" for s in shortfalls]
        super().__init__("eigenvalue coverage shortfall:\n  " + "\n  ".join(lines))


class InvariantError(AssertionError):
    pass


def kernel_from_config(cfg) -> WeightKernel:
    name = cfg if isinstance(cfg, str) else (cfg or {}).get("name", "default")
    if name != "default":
        raise ValueError(f"unknown weight kernel {name!r}")
    return WeightKernel()


@dataclass
class ExperimentConfig:
    K_values: list = field(default_factory=lambda: [12.0, 24.0])
    psi1: dict = field(default_factory=lambda: dict(DEFAULT_PSI))
    psi2: dict = field(default_factory=lambda: dict(DEFAULT_PSI))
    kernel: dict = field(default_factory=lambda: {"name": "default"})
    tolerances: dict = field(default_factory=lambda: {"decomposition": 1e-9})
    thread_count: int | None = None
    seed: int = 0
    prime_cache: int = 5000
    e_method: str = "direct"
    s_method: str = "exact"
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        self.K_values = [float(K) for K in self.K_values]
        if not self.K_values or any(not K > 0 for K in self.K_values):
            raise ValueError("K_values must be a non-empty list of positive reals")
        if self.K_values != sorted(self.K_values):
            raise ValueError("K_values must be sorted ascending")
        if self.thread_count is not None and int(self.thread_count) < 1:
            raise ValueError("thread_count must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def test_functions(self) -> tuple[TestFunction, TestFunction]:
        return from_config(self.psi1), from_config(self.psi2)


def weights_for(K: float, kernel: WeightKernel) -> list[int]:
    """Even k >= 12 with h((k-1)/K) != 0."""
    a, b = kernel.support
    lo = max(12, 2 * math.floor((a * K + 1) / 2))
    return [k for k in range(lo, int(b * K + 1) + 2, 2) if float(kernel((k - 1) / K)) != 0.0]


def coverage_shortfalls(config: ExperimentConfig) -> list[dict]:
    kernel = kernel_from_config(config.kernel)
    psis = config.test_functions()
    out = []
    for K in config.K_values:
        for k in weights_for(K, kernel):
            if dim_cusp(k) == 0:
                continue
            need = max(gm.coverage_needed(k, p) for p in psis)
            if need > config.prime_cache:
                out.append({"K": K, "k": k, "need": need, "have": config.prime_cache})
    return out


@dataclass
class FormRecord:
    k: int
    index: int
    L1: float
    D1: float
    D2: float
    E1: float
    E2: float
    S1: float
    S2: float
    S1_lemma: float
    S2_lemma: float


def _weight_records(k: int, N: int, psi1_cfg: dict, psi2_cfg: dict, e_method: str, s_method: str) -> list[dict]:
    psi1, psi2 = from_config(psi1_cfg), from_config(psi2_cfg)
    ex1, ex2 = gm.expected_value(psi1), gm.expected_value(psi2)
    recs = []
    for f in cached_eigenforms(k, N):
        vals = []
        for psi, ex in ((psi1, ex1), (psi2, ex2)):
            vals.append((gm.mu_f(f, psi) - ex, gm.error_term_E(f, psi, e_method),
                         gm.shifted_sum_S(f, psi, method=s_method),
                         gm.shifted_sum_S(f, psi, method="approximate")))
        (d1, e1, s1, l1), (d2, e2, s2, l2) = vals
        recs.append(asdict(FormRecord(k, f.index, float(f.sym2_L1), d1, d2, e1, e2, s1, s2, l1, l2)))
    return recs


def _resolve_threads(requested: int | None) -> int:
    if requested is not None:
        return int(requested)
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


@dataclass
class VarianceReport:
    K: float
    empirical_lhs: float
    empirical_M: float
    empirical_M_lemma: float
    cross_terms: float
    ee_terms: float
    decomposition_remainder: float
    cs_cross_abs: float
    cs_bound: float
    ss_sum: float
    ee_sum: float
    predicted: VariancePrediction
    forms: list = field(default_factory=list)

    @property
    def ratio_lhs(self) -> float:
        t = self.predicted.total
        return self.empirical_lhs / t if t else math.nan

    @property
    def ratio_M(self) -> float:
        t = self.predicted.total
        return self.empirical_M / t if t else math.nan

    @property
    def ee_over_ss(self) -> float:
        return self.ee_sum / self.ss_sum if self.ss_sum else math.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predicted"] = asdict(self.predicted)
        d["derived"] = {"ratio_lhs": self.ratio_lhs, "ratio_M": self.ratio_M, "ee_over_ss": self.ee_over_ss,
                        "pred_total_thm": self.predicted.total, "pred_total_lemma": self.predicted.total_lemma}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VarianceReport":
        d = {k: v for k, v in d.items() if k != "derived"}
        d["predicted"] = VariancePrediction(**d["predicted"])
        return cls(**d)

    def csv_row(self) -> list:
        p = self.predicted
        return [self.K, self.empirical_lhs, self.empirical_M, p.term_logK, p.term_logu, p.term_const,
                p.term_contour, p.total, p.total_lemma]


def _assemble(K: float, kernel: WeightKernel, records: list[dict], pred: VariancePrediction) -> VarianceReport:
    rows = []
    for r in records:
        w = float(kernel((r["k"] - 1) / K)) * r["L1"]
        rows.append((w, r))

    def total(fn):
        return math.fsum(w * fn(r) for w, r in rows)

    lhs = total(lambda r: r["D1"] * r["D2"])
    M = total(lambda r: r["S1"] * r["S2"])
    cross = total(lambda r: r["S1"] * r["E2"] + r["E1"] * r["S2"])
    ee = total(lambda r: r["E1"] * r["E2"])
    cs_abs = total(lambda r: abs(r["S1"] * r["E2"]) + abs(r["E1"] * r["S2"]))
    sq = {key: total(lambda r, key=key: r[key] ** 2) for key in ("S1", "S2", "E1", "E2")}
    cs_bound = math.sqrt(sq["S1"] * sq["E2"]) + math.sqrt(sq["E1"] * sq["S2"])
    return VarianceReport(
        K=K, empirical_lhs=lhs, empirical_M=M, empirical_M_lemma=total(lambda r: r["S1_lemma"] * r["S2_lemma"]),
        cross_terms=cross, ee_terms=ee, decomposition_remainder=lhs - M - cross - ee,
        cs_cross_abs=cs_abs, cs_bound=cs_bound, ss_sum=math.sqrt(sq["S1"] * sq["S2"]),
        ee_sum=math.sqrt(sq["E1"] * sq["E2"]), predicted=pred, forms=[r for _, r in rows])


def check_invariants(report: VarianceReport, tol: float = 1e-9) -> list[str]:
    bad = []
    for name in ("empirical_lhs", "empirical_M", "cross_terms", "ee_terms"):
        if not math.isfinite(getattr(report, name)):
            bad.append(f"K={report.K}: {name} is not finite")
    if not math.isfinite(report.predicted.total):
        bad.append(f"K={report.K}: predicted total is not finite")
    scale = max(1.0, abs(report.empirical_lhs))
    if abs(report.decomposition_remainder) > tol * scale:
        bad.append(f"K={report.K}: lhs - M - cross - EE = {report.decomposition_remainder:.3e}")
    if report.cs_cross_abs > report.cs_bound * (1 + 1e-12) + 1e-300:
        bad.append(f"K={report.K}: Cauchy-Schwarz bound violated")
    return bad


def run_experiment(config: ExperimentConfig, check: bool = True) -> list[VarianceReport]:
    shortfalls = coverage_shortfalls(config)
    if shortfalls:
        raise CoverageError(shortfalls)
    kernel = kernel_from_config(config.kernel)
    psi1, psi2 = config.test_functions()
    weights = sorted({k for K in config.K_values for k in weights_for(K, kernel) if dim_cusp(k) > 0})
    # one shared truncation per weight keeps the eigen-data independent of the K list
    args = [(k, config.prime_cache, config.psi1, config.psi2, config.e_method, config.s_method) for k in weights]
    threads = _resolve_threads(config.thread_count)
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_weight_records, *zip(*args)))
    else:
        results = [_weight_records(*a) for a in args]
    by_k = dict(zip(weights, results))

    contours = prediction_contours(psi1, psi2) if kernel.moments[0] else (0.0, 0.0)
    reports = []
    for K in config.K_values:
        recs = [r for k in weights_for(K, kernel) for r in by_k.get(k, [])]
        pred = variance_prediction(psi1, psi2, kernel, K, contours=contours)
        rep = _assemble(K, kernel, recs, pred)
        if check:
            bad = check_invariants(rep, config.tolerances.get("decomposition", 1e-9))
            if bad:
                raise InvariantError("; ".join(bad))
        reports.append(rep)
    return reports


def trend_ratio(reports: list[VarianceReport], K_lo: float = 12.0, K_hi: float = 24.0) -> dict:
    """empirical_M(K_hi) / empirical_M(K_lo) against the band [(K_hi/K_lo)^1, (K_hi/K_lo)^2]."""
    by = {r.K: r for r in reports}
    lo, hi = by[float(K_lo)].empirical_M, by[float(K_hi)].empirical_M
    ratio = hi / lo if lo else math.nan
    q = K_hi / K_lo
    return {"ratio": ratio, "band": [q, q * q], "in_band": bool(q <= ratio <= q * q)}


# ---------------------------------------------------------------------------
# report emission

def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def reports_to_json(reports: list[VarianceReport], config: ExperimentConfig | None = None) -> str:
    doc = {"config": config.to_dict() if config else None, "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True)


def reports_from_json(text: str) -> list[VarianceReport]:
    return [VarianceReport.from_dict(d) for d in json.loads(text)["reports"]]


def reports_to_csv(reports: list[VarianceReport]) -> str:
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([repr(float(x)) for x in r.csv_row()])
    return buf.getvalue()


def reports_to_svg(reports: list[VarianceReport], width: int = 640, height: int = 420) -> str:
    """Log-log plot of |empirical_M|, |empirical_lhs| and |predicted total| against K."""
    series = {
        "empirical_M": [r.empirical_M for r in reports],
        "empirical_lhs": [r.empirical_lhs for r in reports],
        "pred_total_thm": [r.predicted.total for r in reports],
    }
    colors = {"empirical_M": "#1f77b4", "empirical_lhs": "#2ca02c", "pred_total_thm": "#d62728"}
    Ks = [r.K for r in reports]
    floor = 1e-300
    ys = [math.log10(max(abs(v), floor)) for vals in series.values() for v in vals]
    x0, x1 = math.log10(min(Ks)), math.log10(max(Ks))
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 50

    def px(K, v):
        X = pad + (math.log10(K) - x0) / (x1 - x0) * (width - 2 * pad)
        Y = height - pad - (math.log10(max(abs(v), floor)) - y0) / (y1 - y0) * (height - 2 * pad)
        return f"{X:.2f},{Y:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="#888"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">log10 K</text>',
           f'<text x="12" y="{pad - 12}">log10 |value|</text>']
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(px(K, v) for K, v in zip(Ks, vals))
        out.append(f'<polyline data-series="{name}" fill="none" stroke="{colors[name]}" '
                   f'stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{width - pad + 4 - 140}" y="{pad + 16 + 16 * i}" '
                   f'fill="{colors[name]}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(reports: list[VarianceReport], formats=("csv", "json", "svg"), out_dir=".",
                stem: str = "variance", config: ExperimentConfig | None = None, paths: dict | None = None) -> dict:
    """Write the requested formats; returns {format: path}."""
    if not reports:
        raise ValueError("no reports to emit")
    writers = {"csv": lambda: reports_to_csv(reports), "json": lambda: reports_to_json(reports, config),
               "svg": lambda: reports_to_svg(reports)}
    paths = paths or {}
    written = {}
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}")
        path = Path(paths.get(fmt) or Path(out_dir) / f"{stem}.{fmt}")
        written[fmt] = _write(path, writers[fmt]())
    return written
