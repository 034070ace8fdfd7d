"""Test functions psi on the positive reals and their Mellin transforms.

Everything is parametrized through the log-profile ``Psi(t) = psi(e^t)``;
the Mellin transform used throughout is

    psi~(s) = int_0^inf psi(1/y) y^(s-1) dy = int Psi(t) e^(-s t) dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import panel_nodes


class TestFunction:
    """Base class; subclasses provide ``profile`` and ``log_support``."""

    __test__ = False  # not a pytest class

    even: bool = False
    derivative_order: float = math.inf

    def profile(self, t):
        raise NotImplementedError

    def log_support(self) -> tuple[float, float]:
        """Interval in t = log y outside which Psi is below 1e-18 of its scale."""
        raise NotImplementedError

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = self.profile(np.log(y[pos]))
        return out if out.ndim else float(out)

    # Mellin transform by quadrature; subclasses may override with closed forms
    def _nodes(self, s):
        a, b = self.log_support()
        tau = float(np.max(np.abs(np.imag(s)))) if np.size(s) else 0.0
        # 24 nodes per oscillation period of e^{-i tau t}
        panels = int(math.ceil((b - a) * (tau + 1) / (2 * math.pi))) + 16
        t, w = panel_nodes(np.linspace(a, b, panels + 1), 24)
        return t, w * self.profile(t)

    def _transform(self, s, extra=None):
        s = np.asarray(s, dtype=complex)
        t, w = self._nodes(s)
        if extra is not None:
            w = w * extra(t)
        flat = s.ravel()
        out = np.empty(flat.shape, dtype=complex)
        step = max(1, 2 ** 22 // max(1, t.size))  # bounds the exp matrix to ~64 MB
        for lo in range(0, flat.size, step):
            out[lo:lo + step] = np.exp(-np.multiply.outer(flat[lo:lo + step], t)) @ w
        out = out.reshape(s.shape)
        return out if out.ndim else complex(out)

    def mellin(self, s):
        return self._transform(s)

    def mellin_derivative(self, s):
        return self._transform(s, lambda t: -t)

    def log_integral(self) -> float:
        """int psi(y) dy / y."""
        return float(np.real(self.mellin(0.0)))

    def to_config(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return Combination([(1.0, self), (1.0, other)])

    def __rmul__(self, c: float) -> "TestFunction":
        return Combination([(float(c), self)])

    __mul__ = __rmul__


@dataclass
class LogGaussian(TestFunction):
    """psi(y) = amplitude * exp(-((log y - center) / width)^2)."""

    width: float = 1.0
    amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")
        self.even = self.center == 0.0

    def profile(self, t):
        return self.amplitude * np.exp(-((np.asarray(t) - self.center) / self.width) ** 2)

    def log_support(self):
        r = 6.5 * self.width
        return self.center - r, self.center + r

    def mellin(self, s):
        s = np.asarray(s, dtype=complex)
        w = self.width
        out = self.amplitude * w * math.sqrt(math.pi) * np.exp(w * w * s * s / 4 - self.center * s)
        return out if out.ndim else complex(out)

    def mellin_derivative(self, s):
        s = np.asarray(s, dtype=complex)
        out = self.mellin(s) * (self.width ** 2 * s / 2 - self.center)
        return out if np.ndim(out) else complex(out)

    def to_config(self):
        return {"kind": "log_gaussian", "width": self.width, "amplitude": self.amplitude,
                "center": self.center, "evenness": self.even}


@dataclass
class Bump(TestFunction):
    """Compactly supported bump in log y on [center - log R, center + log R].

    Psi(t) = amplitude * exp(-1 / (1 - u^2)), u = (t - center) / log R.
    """

    radius: float = 2.0
    amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.radius <= 1:
            raise ValueError("radius must exceed 1")
        self.even = self.center == 0.0
        self.half = math.log(self.radius)

    def profile(self, t):
        u = (np.asarray(t, dtype=float) - self.center) / self.half
        out = np.zeros_like(u)
        inside = np.abs(u) < 1
        out[inside] = self.amplitude * np.exp(-1 / (1 - u[inside] ** 2))
        return out

    def log_support(self):
        return self.center - self.half, self.center + self.half

    def to_config(self):
        return {"kind": "bump", "radius": self.radius, "amplitude": self.amplitude,
                "center": self.center, "evenness": self.even}


@dataclass
class Combination(TestFunction):
    terms: list = field(default_factory=list)

    def __post_init__(self):
        self.even = all(f.even for _, f in self.terms)

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        return sum((c * f.profile(t) for c, f in self.terms), np.zeros_like(t))

    def log_support(self):
        if not self.terms:
            return -1.0, 1.0
        sup = [f.log_support() for _, f in self.terms]
        return min(a for a, _ in sup), max(b for _, b in sup)

    def mellin(self, s):
        s = np.asarray(s, dtype=complex)
        out = sum((c * np.asarray(f.mellin(s)) for c, f in self.terms), np.zeros_like(s))
        return out if out.ndim else complex(out)

    def mellin_derivative(self, s):
        s = np.asarray(s, dtype=complex)
        out = sum((c * np.asarray(f.mellin_derivative(s)) for c, f in self.terms), np.zeros_like(s))
        return out if out.ndim else complex(out)

    def to_config(self):
        return {"kind": "sum", "terms": [{"coefficient": c, "psi": f.to_config()} for c, f in self.terms],
                "evenness": self.even}


class Zero(Combination):
    def __init__(self):
        super().__init__([])

    def to_config(self):
        return {"kind": "zero", "evenness": True}


def mean_zero_log_gaussian(w1: float = 0.5, w2: float = 1.0) -> Combination:
    """Difference of two log-Gaussians with equal mass, so psi~(0) = 0."""
    return Combination([(1.0, LogGaussian(w1, 1.0)), (-w1 / w2, LogGaussian(w2, 1.0))])


def from_config(cfg: dict) -> TestFunction:
    kind = cfg.get("kind")
    params = cfg.get("params", cfg)
    if kind == "log_gaussian":
        psi = LogGaussian(float(params.get("width", 1.0)), float(params.get("amplitude", 1.0)),
                          float(params.get("center", 0.0)))
    elif kind == "bump":
        psi = Bump(float(params.get("radius", 2.0)), float(params.get("amplitude", 1.0)),
                   float(params.get("center", 0.0)))
    elif kind == "sum":
        psi = Combination([(float(t["coefficient"]), from_config(t["psi"])) for t in params["terms"]])
    elif kind == "zero":
        psi = Zero()
    else:
        raise ValueError(f"unknown test function kind {kind!r}")
    if cfg.get("evenness") and not psi.even:
        raise ValueError("config asserts evenness but the function is not even")
    return psi
