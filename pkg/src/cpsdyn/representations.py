"""Weight generators f(y), normalisation profiles Xi(xi) and the Abel-type solver linking them.

A representation is a pair (f, Xi).  Trajectories are weighted by
f(min(|y0|, |yt|)) and the windowed estimates are divided by Xi(xi(t)).  For
a profile that is symmetric about pi/4 with Xi(0) = 1 and Xi''(0) = 2, the
generator is

    B(z) = z sqrt(1 - z^2) d/dz [z^2 Xi(arcsin z)]
    f(y) = int_0^{2y} B'(z) / sqrt((2y)^2 - z^2) dz

With z = sin(xi) and G(xi) = sin^2(xi) Xi(xi) this reduces to
B(sin xi) = sin(xi) G'(xi) and B'(sin xi) = G'(xi) + tan(xi) G''(xi); the
substitution z = 2y sin(u) removes the inverse-square-root endpoint, leaving
f(y) = int_0^{pi/2} B'(2y sin u) du.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from . import specfun

log = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi
Array = np.ndarray


class AdmissibilityError(ValueError):
    """A normalisation profile violates the conditions for a bounded generator."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("normalisation profile rejected:\n" + report.summary())


class ConvergenceError(ArithmeticError):
    pass


# --- profiles and generators -------------------------------------------------

@dataclass(frozen=True)
class XiProfile:
    """Xi(xi) on [0, pi/2] with optional analytic first and second derivatives."""

    value: Callable[[Array], Array]
    d1: Callable[[Array], Array] | None = None
    d2: Callable[[Array], Array] | None = None
    name: str = "custom"
    fd_step: float = 1e-4
    # False when d1/d2 are only approximations (splines); see abel_B_prime
    exact_derivs: bool = True

    def __call__(self, xi):
        return self.value(np.asarray(xi, dtype=float))

    def derivs(self, xi) -> tuple[Array, Array, Array]:
        xi = np.asarray(xi, dtype=float)
        v = self.value(xi)
        h = self.fd_step
        if self.d1 is not None:
            d1 = self.d1(xi)
        else:
            d1 = (self.value(xi - 2 * h) - 8 * self.value(xi - h) + 8 * self.value(xi + h) - self.value(xi + 2 * h)) / (12 * h)
        if self.d2 is not None:
            d2 = self.d2(xi)
        else:
            d2 = (
                -self.value(xi - 2 * h) + 16 * self.value(xi - h) - 30 * v
                + 16 * self.value(xi + h) - self.value(xi + 2 * h)
            ) / (12 * h * h)
        return (np.broadcast_to(v, xi.shape), np.broadcast_to(d1, xi.shape),
                np.broadcast_to(d2, xi.shape))

    @classmethod
    def from_table(cls, xi_nodes, values, name: str = "table") -> "XiProfile":
        """Quintic-spline profile through tabulated (xi, Xi) pairs covering [0, pi/2].

        Quintic rather than cubic so Xi'' at the ends is accurate enough for
        the curvature condition at xi = 0.
        """
        xi_nodes = np.asarray(xi_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(xi_nodes)
        xi_nodes, values = xi_nodes[order], values[order]
        if len(xi_nodes) < 8:
            raise ValueError("Xi table needs at least 8 rows")
        if xi_nodes[0] > 1e-12 or abs(xi_nodes[-1] - HALF_PI) > 1e-9:
            raise ValueError("Xi table must span [0, pi/2]")
        spline = make_interp_spline(xi_nodes, values, k=5)
        return cls(spline, spline.derivative(1), spline.derivative(2), name, exact_derivs=False)

    @property
    def numerical(self) -> bool:
        return self.d1 is None or self.d2 is None or not self.exact_derivs


class Provenance(enum.Enum):
    ANALYTIC_SQZ = "analytic-sqz"
    ANALYTIC_CASE1 = "analytic-case1"
    ANALYTIC_CASE2 = "analytic-case2"
    ABEL_SOLVED = "abel-solved"
    TABLE = "table"


@dataclass(frozen=True)
class FGenerator:
    value: Callable[[Array], Array]
    provenance: Provenance
    y_table: Array | None = None
    f_table: Array | None = None
    name: str = ""

    def __call__(self, y):
        return self.value(np.asarray(y, dtype=float))

    def tabulate(self, n: int = 1024) -> tuple[Array, Array]:
        if self.y_table is not None and n == len(self.y_table):
            return self.y_table, self.f_table
        y = np.linspace(0.0, 0.5, n)
        return y, np.asarray(self(y), dtype=float)

    @classmethod
    def from_table(cls, y, f, name: str = "table", provenance: Provenance = Provenance.TABLE) -> "FGenerator":
        """Cubic-spline interpolant of a tabulated generator on [0, 1/2]."""
        y = np.asarray(y, dtype=float)
        f = np.asarray(f, dtype=float)
        if y.ndim != 1 or y.shape != f.shape or len(y) < 2:
            raise ValueError("f table must be two equal-length 1-D columns")
        if y[0] > 1e-12 or abs(y[-1] - 0.5) > 1e-12 or np.any(np.diff(y) <= 0):
            raise ValueError("f table must be strictly increasing over [0, 1/2]")
        interp = CubicSpline(y, f, extrapolate=False)

        def value(x):
            return interp(np.clip(x, 0.0, 0.5))

        return cls(value, provenance, y, f, name)


@dataclass(frozen=True)
class IsomorphismRep:
    f: FGenerator
    xi: XiProfile | None
    name: str


# --- analytic pairs ----------------------------------------------------------

def f_sqz(y):
    y = np.asarray(y, dtype=float)
    return 2.0 - 0.5 / (y + 0.5) ** 2


def _s_arctanh(y):
    """(1 - 2y) * arctanh(2y), continuous at y = 1/2 where it vanishes."""
    y = np.asarray(y, dtype=float)
    s = 1.0 - 2.0 * y
    inner = np.where(s > 0.0, 2.0 * y, 0.0)
    return np.where(s > 0.0, s * specfun.arctanh(inner), 0.0)


def f_case1(y):
    y = np.asarray(y, dtype=float)
    y2 = y * y
    poly = 23.0 / 4.0 * y - 36.0 * y2 + 70.0 * y2 * y + 240.0 * y2 * y2 - 420.0 * y2 * y2 * y
    # 9/8 - 9/2 y^2 - 210 y^4 + 840 y^6 = -(3/8)(1 - 2y)(1 + 2y)(560 y^4 - 3)
    coeff = -0.375 * (1.0 + 2.0 * y) * (560.0 * y2 * y2 - 3.0)
    return poly + coeff * _s_arctanh(y)


CASE2_ENDPOINT = 6.0 * math.log(2.0)


def _case2_near_endpoint(y):
    """Case 2 for 1 - 2y < 1e-4, with the log-divergent arctanh and K terms combined.

    Uses a (A - K) + m1 K with a = 3 - 36 y^2, A = arctanh(2y), m1 = 1 - 4y^2 = s(2 - s);
    K is taken from the AGM of the complementary parameter so m1 keeps full precision.
    """
    s = 1.0 - 2.0 * y
    m1 = s * (2.0 - s)
    y2 = y * y
    poly = 2.0 * y + 18.0 * y2 + 128.0 * y2 * y - 120.0 * y2 * y2
    a = 3.0 - 36.0 * y2
    safe_s = np.where(s > 0.0, s, 1.0)
    k, e = specfun.ellipke_complement(np.where(s > 0.0, m1, 1.0))
    a_minus_k = 0.5 * (np.log(2.0 - s) - np.log(safe_s)) - k
    val = poly + a * a_minus_k + m1 * k + (2.0 - 64.0 * y2) * e
    return np.where(s > 0.0, val, CASE2_ENDPOINT)


def f_case2(y):
    y = np.asarray(y, dtype=float)
    s = 1.0 - 2.0 * y
    near = s < 1e-4
    yf = np.where(near, 0.25, y)
    y2 = yf * yf
    m = 4.0 * y2
    far = (
        2.0 * yf + 18.0 * y2 + 128.0 * y2 * yf - 120.0 * y2 * y2
        + (3.0 - 36.0 * y2) * specfun.arctanh(2.0 * yf)
        + (2.0 - 64.0 * y2) * specfun.ellipe(m)
        - (2.0 - 32.0 * y2) * specfun.ellipk(m)
    )
    if np.any(near):
        yn = np.where(near, y, 0.5)
        return np.where(near, _case2_near_endpoint(yn), far)
    return far


def xi_case1(xi):
    s2 = np.sin(2.0 * np.asarray(xi, dtype=float))
    return 1.0 + 0.25 * s2 * s2 - 2.0 * s2 / np.pi


def _xi_case1_d1(xi):
    xi = np.asarray(xi, dtype=float)
    return 0.5 * np.sin(4.0 * xi) - 4.0 * np.cos(2.0 * xi) / np.pi


def _xi_case1_d2(xi):
    xi = np.asarray(xi, dtype=float)
    return 2.0 * np.cos(4.0 * xi) + 8.0 * np.sin(2.0 * xi) / np.pi


def xi_case2(xi):
    xi = np.asarray(xi, dtype=float)
    return 3.0 - 2.0 * np.cos(xi) - 2.0 * np.sin(xi) + np.sin(2.0 * xi) / np.pi


def _xi_case2_d1(xi):
    xi = np.asarray(xi, dtype=float)
    return 2.0 * np.sin(xi) - 2.0 * np.cos(xi) + 2.0 * np.cos(2.0 * xi) / np.pi


def _xi_case2_d2(xi):
    xi = np.asarray(xi, dtype=float)
    return 2.0 * np.cos(xi) + 2.0 * np.sin(xi) - 4.0 * np.sin(2.0 * xi) / np.pi


# h(x) = (sin x - x cos x) / sin^2 x and derivatives; Taylor series below x = 0.1
_H_SERIES = (
    (1 / 3, 7 / 90, 31 / 2520, 127 / 75600, 73 / 342144, 1414477 / 54486432000),
    (1 / 3, 7 / 30, 31 / 504, 127 / 10800, 73 / 38016, 1414477 / 4953312000),
    (7 / 15, 31 / 126, 127 / 1800, 73 / 4752, 1414477 / 495331200, 8191 / 17107200),
)


def _odd_series(coeffs, x):
    x2 = x * x
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x2 + c
    return acc * x


def _even_series(coeffs, x):
    x2 = x * x
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x2 + c
    return acc


def _h_funcs(x):
    small = x < 0.1
    xs = np.where(small, 0.5, x)
    sn, cs = np.sin(xs), np.cos(xs)
    h0 = (sn - xs * cs) / sn**2
    h1 = (0.5 * xs * np.cos(2 * xs) + 1.5 * xs - np.sin(2 * xs)) / sn**3
    h2 = (xs * cs / sn - 6 * xs * cs / sn**3 - 3 + 6 / sn**2) / sn
    return (
        np.where(small, _odd_series(_H_SERIES[0], x), h0),
        np.where(small, _even_series(_H_SERIES[1], x), h1),
        np.where(small, _odd_series(_H_SERIES[2], x), h2),
    )


def _xi_sqz_all(xi):
    """Xi_sqz and derivatives, evaluated on the half [0, pi/4] and mirrored.

    On eps in [0, pi/4]:  Xi = sec^2(eps) - (4/pi) h(2 eps).  The closed form is
    exactly symmetric about pi/4, so mirroring loses nothing and sidesteps the
    cancelling singular terms near pi/2.
    """
    xi = np.asarray(xi, dtype=float)
    eps = np.minimum(xi, HALF_PI - xi)
    sign = np.where(xi > 0.25 * np.pi, -1.0, 1.0)
    sec2 = 1.0 / np.cos(eps) ** 2
    tan = np.tan(eps)
    h0, h1, h2 = _h_funcs(2.0 * eps)
    v = sec2 - 4.0 / np.pi * h0
    d1 = 2.0 * sec2 * tan - 8.0 / np.pi * h1
    d2 = 2.0 * sec2 * sec2 + 4.0 * sec2 * tan * tan - 16.0 / np.pi * h2
    return v, sign * d1, d2


def xi_sqz(xi):
    return _xi_sqz_all(xi)[0]


def sqz_closed_forms(xi):
    """Squeezed-window (p11, p12, cbar) as functions of the mixing angle.

    p11 = 1 - (sin 2xi - 2xi cos 2xi) / (pi sin^2 xi); p12 is p11 at pi/2 - xi
    (the two integrals differ only by complementary angular limits), which
    equals tan^2 xi - (sin 2xi - 2xi cos 2xi)/(pi cos^2 xi) without the
    cancellation near pi/2.
    """
    xi = np.asarray(xi, dtype=float)
    cbar = xi_sqz(xi)
    return _sqz_p11(xi), _sqz_p11(HALF_PI - xi), cbar


_SIN_MINUS_XCOS = tuple((-1) ** (k + 1) * 2 * k / math.factorial(2 * k + 1) for k in range(1, 8))


def _sqz_p11(xi):
    xi = np.asarray(xi, dtype=float)
    # (sin x - x cos x) / sin^2(x/2) with x = 2 xi; series for small x
    x = 2.0 * xi
    small = x < 0.1
    xs = np.where(small, 0.5, x)
    xsafe = np.where(x > 0.0, x, 1.0)
    direct = (np.sin(xs) - xs * np.cos(xs)) / np.sin(0.5 * xs) ** 2
    # sin x - x cos x = sum_k (-1)^(k+1) 2k x^(2k+1) / (2k+1)!
    num = _odd_series(_SIN_MINUS_XCOS, x) * x * x
    series = np.where(x > 0.0, num / np.sin(0.5 * xsafe) ** 2, 0.0)
    ratio = np.where(small, series, direct)
    return 1.0 - ratio / np.pi


XI_SQZ = XiProfile(xi_sqz, lambda x: _xi_sqz_all(x)[1], lambda x: _xi_sqz_all(x)[2], "sqz")
XI_CASE1 = XiProfile(xi_case1, _xi_case1_d1, _xi_case1_d2, "case1")
XI_CASE2 = XiProfile(xi_case2, _xi_case2_d1, _xi_case2_d2, "case2")
XI_CONSTANT_ONE = XiProfile(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                            lambda x: np.zeros_like(np.asarray(x, dtype=float)), "constant-one")

F_SQZ = FGenerator(f_sqz, Provenance.ANALYTIC_SQZ, name="sqz")
F_CASE1 = FGenerator(f_case1, Provenance.ANALYTIC_CASE1, name="case1")
F_CASE2 = FGenerator(f_case2, Provenance.ANALYTIC_CASE2, name="case2")

BUILTIN_XI = {"sqz": XI_SQZ, "case1": XI_CASE1, "case2": XI_CASE2, "constant-one": XI_CONSTANT_ONE}


def builtin_rep(name: str) -> IsomorphismRep:
    pairs = {"sqz": (F_SQZ, XI_SQZ), "case1": (F_CASE1, XI_CASE1), "case2": (F_CASE2, XI_CASE2)}
    try:
        f, xi = pairs[name]
    except KeyError:
        raise ValueError(f"unknown representation {name!r}; choose from {sorted(pairs)}") from None
    return IsomorphismRep(f, xi, name)


# --- weight ------------------------------------------------------------------

def weight(rep: IsomorphismRep, y0, yt):
    """f(min(|y0|, |yt|)), the two-time trajectory weight."""
    y0 = np.asarray(y0, dtype=float)
    yt = np.asarray(yt, dtype=float)
    if np.any(np.abs(y0) > 0.5) or np.any(np.abs(yt) > 0.5):
        raise ValueError("scaled action differences must lie in [-1/2, 1/2]")
    out = rep.f(np.minimum(np.abs(y0), np.abs(yt)))
    return out if np.ndim(out) else float(out)


# --- admissibility -----------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured {self.measured:.3e} (tolerance {self.tolerance:.1e})"


@dataclass
class ValidationReport:
    subject: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        return "\n".join(f"[{self.subject}] {c.line()}" for c in self.checks)


VALIDATION_GRID = 1024


def validate_xi(xi: XiProfile) -> ValidationReport:
    """Check the conditions under which a profile yields a bounded generator."""
    grid = np.linspace(0.0, HALF_PI, VALIDATION_GRID)
    report = ValidationReport(xi.name)
    with np.errstate(all="ignore"):
        values = np.asarray(xi(grid), dtype=float) * np.ones_like(grid)
        finite = bool(np.all(np.isfinite(values)))
        report.checks.append(Check("bounded", finite, float(np.max(np.abs(values))) if finite else math.inf, math.inf))
        if not finite:
            return report
        mirror = np.asarray(xi(HALF_PI - grid), dtype=float)
        sym = float(np.max(np.abs(mirror - values)))
        report.checks.append(Check("symmetry", sym <= 1e-10, sym, 1e-10))
        v0, _, d2_0 = (float(a) for a in xi.derivs(np.array(0.0)))
        report.checks.append(Check("xi(0)=1", abs(v0 - 1.0) <= 1e-8, abs(v0 - 1.0), 1e-8))
        report.checks.append(Check("xi''(0)=2", abs(d2_0 - 2.0) <= 1e-4, abs(d2_0 - 2.0), 1e-4))
        vmin = float(np.min(values))
        report.checks.append(Check("positive", vmin >= 1e-6, vmin, 1e-6))
    return report


# --- Abel construction -------------------------------------------------------

def _g_derivs(xi: XiProfile, angle):
    """First and second derivatives of G(angle) = sin^2(angle) Xi(angle)."""
    v, d1, d2 = xi.derivs(angle)
    s, s2, c2 = np.sin(angle), np.sin(2.0 * angle), np.cos(2.0 * angle)
    g1 = s2 * v + s * s * d1
    g2 = 2.0 * c2 * v + 2.0 * s2 * d1 + s * s * d2
    return g1, g2


def abel_B(xi: XiProfile, z):
    z = np.asarray(z, dtype=float)
    if np.any(z >= 1.0) or np.any(z < 0.0):
        raise ValueError("abel_B: z must lie in [0, 1)")
    angle = np.arcsin(z)
    g1, _ = _g_derivs(xi, angle)
    out = z * g1
    return out if out.ndim else float(out)


def abel_B_prime(xi: XiProfile, z):
    """dB/dz = G'(xi) + tan(xi) G''(xi) at xi = arcsin z."""
    if xi.numerical:
        return _b_prime_regularised(xi, z)
    z = np.asarray(z, dtype=float)
    angle = np.arcsin(np.clip(z, 0.0, 1.0))
    g1, g2 = _g_derivs(xi, angle)
    with np.errstate(over="ignore", invalid="ignore"):
        out = g1 + np.tan(angle) * g2
    return out


# width of the band below pi/2 where G'' is replaced by a linear model
EDGE_BAND = 1e-3


def curvature_defect(xi: XiProfile) -> float:
    v0, _, d2_0 = (float(a) for a in xi.derivs(np.array(0.0)))
    return d2_0 - 2.0 * v0


def _projected(xi: XiProfile) -> XiProfile:
    """xi minus (d/8) sin^2(2 xi), d = Xi''(0) - 2 Xi(0); symmetric, same Xi(0), zero defect."""
    d = curvature_defect(xi)

    def derivs(x):
        v, d1, d2 = xi.derivs(x)
        return v - d / 8.0 * np.sin(2.0 * x) ** 2, d1 - d / 4.0 * np.sin(4.0 * x), d2 - d * np.cos(4.0 * x)

    return XiProfile(lambda x: derivs(x)[0], lambda x: derivs(x)[1], lambda x: derivs(x)[2], xi.name)


def _b_prime_regularised(xi: XiProfile, z):
    """B' for profiles whose derivatives are approximate.

    G''(pi/2) vanishes for an admissible profile, but tan(xi) multiplies any
    error in G'' near pi/2.  The residual curvature defect is projected out
    and, within EDGE_BAND of pi/2, G'' is taken linear in eps = pi/2 - xi
    through zero, so tan(xi) G'' tends to the finite slope.
    """
    z = np.asarray(z, dtype=float)
    adj = _projected(xi)
    angle = np.arcsin(np.clip(z, 0.0, 1.0))
    eps = HALF_PI - angle
    edge = eps < EDGE_BAND
    g1, g2 = _g_derivs(adj, np.where(edge, HALF_PI - EDGE_BAND, angle))
    g1_true, _ = _g_derivs(adj, angle)
    safe = np.where(eps > 0.0, eps, 1.0)
    eps_cot = np.where(eps > 0.0, safe * np.cos(safe) / np.sin(safe), 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        inner = g1 + np.tan(angle) * g2
    return np.where(edge, g1_true + g2 / EDGE_BAND * eps_cot, inner)


def chi(xi: XiProfile, z):
    """Expanded integrand: B'(z) = z chi(z); diagnostic cross-check of abel_B_prime."""
    z = np.asarray(z, dtype=float)
    angle = np.arcsin(z)
    v, d1, d2 = xi.derivs(angle)
    root = np.sqrt(1.0 - z * z)
    dz1 = d1 / root
    dz2 = (z / (1.0 - z * z) * d1 + d2 / root) / root
    return (4.0 - 6.0 * z * z) / root * v + (5.0 * z * root - z**3 / root) * dz1 + z * z * root * dz2


def _graded_panels(levels: int) -> Array:
    """Panel edges on [0, pi/2], halving towards pi/2 where the integrand may steepen."""
    gaps = (0.25 * np.pi) * 0.5 ** np.arange(levels + 1)
    return np.concatenate([[0.0], HALF_PI - gaps, [HALF_PI]])


def _graded_rule(order: int, levels: int) -> tuple[Array, Array]:
    rule = specfun.gauss_legendre(order)
    edges = _graded_panels(levels)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = rule.on_interval(a, b)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def abel_f_value(xi: XiProfile, y, order: int = 64, levels: int = 24):
    """Raw quadrature estimate of f(y) = int_0^{pi/2} B'(2y sin u) du, no admissibility checks."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u, w = _graded_rule(order, levels)
    z = 2.0 * y[:, None] * np.sin(u)[None, :]
    vals = abel_B_prime(xi, z)
    return vals @ w


def default_f_grid(n: int = 1024, ratio: float = 0.97) -> Array:
    """Uniform spacing 0.5/(n-1) on [0, 1/2 - d0], then gaps to 1/2 shrinking geometrically.

    f may have an s log s edge at y = 1/2 (s = 1 - 2y); the geometric tail keeps
    every cell short relative to its distance from the edge.  d0 is chosen so the
    first geometric gap matches the uniform spacing.
    """
    h = 0.5 / (n - 1)
    d0 = h / (1.0 - ratio)
    uniform = np.arange(0.0, 0.5 - d0 - 0.5 * h, h)
    dist = d0 * ratio ** np.arange(int(np.log(1e-13 / d0) / np.log(ratio)) + 1)
    return np.concatenate([uniform, 0.5 - dist, [0.5]])


def abel_solve_f(
    xi: XiProfile,
    y_grid=None,
    quad_order: int = 64,
    *,
    check: bool = True,
    tol: float = 1e-6,
) -> FGenerator:
    """Construct the weight generator paired with ``xi`` by inverting the Abel equation.

    Tabulates f on ``y_grid`` (default: :func:`default_f_grid`) and
    returns a cubic-spline interpolant.  With ``check`` the profile must pass
    :func:`validate_xi` and quadrature at ``quad_order`` and ``2*quad_order``
    must agree within ``tol``.
    """
    if check:
        report = validate_xi(xi)
        if not report.passed:
            raise AdmissibilityError(report)
    y = default_f_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    f = abel_f_value(xi, y, quad_order)
    if check:
        refined = abel_f_value(xi, y, 2 * quad_order)
        gap = float(np.max(np.abs(refined - f)))
        if not gap <= tol:
            raise ConvergenceError(f"quadrature refinement changed f by {gap:.3e} (> {tol:.1e})")
        f = refined
        if np.any(f < -1e-10):
            warnings.warn(f"generator for {xi.name!r} is negative (min {f.min():.3e}); "
                          "per-trajectory weights will not be non-negative", stacklevel=2)
    return FGenerator.from_table(y, f, name=f"abel[{xi.name}]", provenance=Provenance.ABEL_SOLVED)


def residual_integral_equation(rep: IsomorphismRep, xi_value: float, order: int = 64) -> float:
    """|pi Xi sin^2(xi)/2 - int_0^{pi/2} ds int_0^xi dtau sin s f(sin s sin tau / 2)|."""
    if rep.xi is None:
        raise ValueError("representation has no normalisation profile")
    rule = specfun.gauss_legendre(order)
    s, ws = rule.on_interval(0.0, HALF_PI)
    tau, wt = rule.on_interval(0.0, float(xi_value))
    vals = np.sin(s)[:, None] * rep.f(np.sin(s)[:, None] * np.sin(tau)[None, :] / 2.0)
    rhs = float(ws @ vals @ wt)
    lhs = float(np.pi * rep.xi(xi_value) * math.sin(xi_value) ** 2 / 2.0)
    return abs(lhs - rhs)


# --- CSV tables --------------------------------------------------------------

def write_f_table(path, y, f, comments: list[str] | None = None) -> None:
    buf = io.StringIO()
    for c in comments or []:
        buf.write(f"# {c}\n")
    buf.write("y,f\n")
    for a, b in zip(y, f):
        buf.write(f"{float(a):.17g},{float(b):.17g}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _read_two_columns(path, expected: tuple[str, str]) -> tuple[Array, Array]:
    rows = []
    header_seen = False
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
            if not row:
                continue
            if not header_seen:
                header_seen = True
                names = tuple(c.strip().lower() for c in row)
                if names != expected:
                    raise ValueError(f"{path}: expected header {','.join(expected)}, got {','.join(row)}")
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected two columns, got {row}")
            rows.append((float(row[0]), float(row[1])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, 0], data[:, 1]


def read_f_table(path) -> FGenerator:
    y, f = _read_two_columns(path, ("y", "f"))
    return FGenerator.from_table(y, f, name=Path(path).stem)


def read_xi_table(path) -> XiProfile:
    xi, v = _read_two_columns(path, ("xi", "value"))
    return XiProfile.from_table(xi, v, name=Path(path).stem)
