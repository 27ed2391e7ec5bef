"""Invariant suite behind ``cpsdyn validate``.

Each group returns a ValidationReport; the runner collects them into a
JSON-ready dict.  Functions are looked up through their modules at call time
so that a patched primitive (a deliberately injected fault) propagates.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.special

from . import estimator as est
from . import phase_space as ps
from . import propagator as prop
from . import representations as reps
from . import specfun
from .representations import Check, ValidationReport

BENCHMARK_LAMBDAS = (0.02, 0.2, 2.0, 20.0)


def _check(report: ValidationReport, name: str, measured: float, tol: float, *, upper: bool = True) -> None:
    measured = float(measured)
    ok = (measured <= tol) if upper else (measured >= tol)
    report.checks.append(Check(name, bool(ok and math.isfinite(measured)), measured, tol))


def _guard(report: ValidationReport, name: str, func) -> None:
    """Run one check body; an exception is a failed check, not a crashed suite."""
    try:
        func()
    except Exception as exc:  # noqa: BLE001 - every failure must land in the report
        report.checks.append(Check(f"{name} ({type(exc).__name__}: {exc})", False, math.inf, 0.0))


def check_specfun() -> ValidationReport:
    r = ValidationReport("specfun")
    m = np.linspace(0.0, 0.999, 200)

    def elliptic():
        _check(r, "ellipk vs reference", np.max(np.abs(specfun.ellipk(m) / scipy.special.ellipk(m) - 1)), 1e-13)
        _check(r, "ellipe vs reference", np.max(np.abs(specfun.ellipe(m) / scipy.special.ellipe(m) - 1)), 1e-13)
        mm = np.array([0.1, 0.3, 0.7])
        k, kc = specfun.ellipk(mm), specfun.ellipk(1 - mm)
        e, ec = specfun.ellipe(mm), specfun.ellipe(1 - mm)
        _check(r, "Legendre relation", np.max(np.abs(e * kc + ec * k - k * kc - np.pi / 2)), 1e-12)

    def quadrature():
        worst = 0.0
        for n in (4, 16, 64):
            rule = specfun.gauss_legendre(n)
            for deg in range(2 * n):
                exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
                worst = max(worst, abs(float(rule.weights @ rule.nodes**deg) - exact))
        _check(r, "Gauss-Legendre exact to degree 2n-1", worst, 1e-13)

    def arctanh():
        x = np.linspace(-0.999, 0.999, 401)
        _check(r, "arctanh odd", np.max(np.abs(specfun.arctanh(-x) + specfun.arctanh(x))), 0.0)
        _check(r, "arctanh vs reference", np.max(np.abs(specfun.arctanh(x) - np.arctanh(x))), 1e-14)

    for name, fn in (("elliptic", elliptic), ("quadrature", quadrature), ("arctanh", arctanh)):
        _guard(r, name, fn)
    return r


def check_partition() -> ValidationReport:
    """Half-space windows: K11(0) = 0, K22(0) = 1 and K11 + K22 = 1 everywhere."""
    r = ValidationReport("partition")

    def body():
        y = np.concatenate([np.linspace(-0.5, 0.5, 1001), [0.0, -0.0, 1e-300, -1e-300]])
        k1, k2 = ps.half_space_window(1, y), ps.half_space_window(2, y)
        _check(r, "K11 + K22 = 1", np.max(np.abs(k1 + k2 - 1.0)), 0.0)
        _check(r, "K11(0) = 0", abs(float(ps.half_space_window(1, np.array(0.0)))), 0.0)
        _check(r, "K22(0) = 1", abs(float(ps.half_space_window(2, np.array(0.0))) - 1.0), 0.0)
        _check(r, "K11 = [y > 0]", np.max(np.abs(k1 - (y > 0))), 0.0)
        _check(r, "heaviside(0) = 0", abs(specfun.heaviside(0.0)), 0.0)

    _guard(r, "windows", body)
    return r


def check_propagator() -> ValidationReport:
    r = ValidationReport("propagator")
    t = np.linspace(0.0, 5.0, 401)

    def body():
        unit, recon = 0.0, 0.0
        for lam in BENCHMARK_LAMBDAS:
            h = prop.Hamiltonian2.coupled(lam)
            u = prop.evolution_matrix(h, t)
            unit = max(unit, u.unitarity_error())
            recon = max(recon, float(np.max(np.abs(prop.propagator_angles(h, t).unitary().matrix() - u.matrix()))))
        _check(r, "unitarity", unit, 1e-12)
        _check(r, "angle reconstruction", recon, 1e-10)
        h = prop.Hamiltonian2.coupled(20.0)
        g0 = prop.Coefficients2(complex(math.sqrt(3.0), 0.3), complex(0.2, -0.5))
        worst = 0.0
        for tt in (0.25, 0.5, 1.0):
            ode = prop.ode_propagate(h, g0, tt, 1e-3)
            exact = prop.propagate_coefficients(prop.evolution_matrix(h, tt), g0)
            worst = max(worst, abs(ode.g1 - exact.g1), abs(ode.g2 - exact.g2))
        _check(r, "RK4 vs closed form (lambda=20, dt=1e-3)", worst, 1e-6)

    _guard(r, "propagation", body)
    return r


def check_representations() -> ValidationReport:
    r = ValidationReport("representations")
    y = np.linspace(0.0, 0.49, 981)
    y_full = np.linspace(0.0, 0.5, 1001)

    def admissibility():
        for name in ("sqz", "case1", "case2"):
            rep = reps.builtin_rep(name)
            _check(r, f"validate_xi accepts {name}", float(not reps.validate_xi(rep.xi).passed), 0.0)
        _check(r, "validate_xi rejects constant-one", float(reps.validate_xi(reps.XI_CONSTANT_ONE).passed), 0.0)

    def round_trips():
        for name, grid in (("sqz", y_full), ("case1", y), ("case2", y)):
            rep = reps.builtin_rep(name)
            solved = reps.abel_solve_f(rep.xi)
            _check(r, f"{name} Abel round trip", np.max(np.abs(solved(grid) - rep.f(grid))), 1e-6)

    def residuals():
        grid = np.linspace(0.0, reps.HALF_PI, 32)
        for name in ("sqz", "case1", "case2"):
            rep = reps.builtin_rep(name)
            worst = max(reps.residual_integral_equation(rep, x) for x in grid)
            _check(r, f"{name} integral-equation residual", worst, 1e-6)
        _check(r, "sqz residual at pi/4",
               reps.residual_integral_equation(reps.builtin_rep("sqz"), math.pi / 4), 1e-8)

    def normalisation():
        # panels halving towards y = 1/2, where f may have an s log s edge
        edges = np.concatenate([[0.0], 0.5 - 0.25 * 0.5 ** np.arange(30), [0.5]])
        rule = specfun.gauss_legendre(32)
        for name in ("sqz", "case1", "case2"):
            f = reps.builtin_rep(name).f
            total = sum(rule.integrate(f, a, b) for a, b in zip(edges[:-1], edges[1:]))
            _check(r, f"{name}: 2 * integral of f over [0, 1/2] = 1", abs(2 * total - 1), 1e-8)
            _check(r, f"{name}: f >= 0", float(np.min(f(y_full))), 0.0, upper=False)

    for name, fn in (("admissibility", admissibility), ("round trips", round_trips),
                     ("residuals", residuals), ("normalisation", normalisation)):
        _guard(r, name, fn)
    return r


def check_estimator(n_traj: int = 20_000, seed: int = 7, tolerance_sigma: float = 4.0) -> ValidationReport:
    r = ValidationReport("estimator")
    h = prop.Hamiltonian2.coupled(2.0)
    period = 2 * math.pi / math.sqrt(prop.discriminant(h))
    times = np.linspace(0.0, period, 21)
    cfg = est.EnsembleConfig(n_traj, seed, 0.5, times)

    def closed_forms():
        p11, p12, cbar = reps.sqz_closed_forms(math.pi / 4)
        _check(r, "sqz closed forms at pi/4", max(abs(p11 - (1 - 2 / math.pi)), abs(p12 - (1 - 2 / math.pi)),
                                                   abs(cbar - (2 - 4 / math.pi))), 1e-14)
        worst = 0.0
        for x in np.linspace(0.05, 1.5, 12):
            q11, q12 = est.quadrature_oracle_p(reps.builtin_rep("sqz"), x)
            c11, c12, _ = reps.sqz_closed_forms(x)
            worst = max(worst, abs(q11 - c11), abs(q12 - c12))
        _check(r, "quadrature oracle vs sqz closed forms", worst, 1e-8)

    def monte_carlo():
        rep = reps.builtin_rep("sqz")
        s = est.run_novel(h, rep, cfg)
        exact = prop.exact_population_matrix(h, times)
        _check(r, "t=0 identity", float(np.max(np.abs(s.pop[0] - np.eye(2)))), 0.0)
        _check(r, "rows sum to 1", float(np.max(np.abs(s.pop.sum(axis=2) - 1))), 1e-12)
        _check(r, "populations in [0, 1]", float(np.max(np.maximum(-s.pop, s.pop - 1))), 0.0)
        z = np.abs(s.pop - np.swapaxes(exact, 1, 2)) / np.maximum(s.stderr, 1e-300)
        z = np.where(s.stderr > 0, z, 0.0)
        _check(r, f"sqz populations vs exact (in stderr, tolerance {tolerance_sigma:g})", float(np.max(z)),
               tolerance_sigma)
        p11, p12, cbar = reps.sqz_closed_forms(s.xi)
        zc = np.abs(s.cbar[:, 0] - cbar) / np.where(s.cbar_stderr[:, 0] > 0, s.cbar_stderr[:, 0], np.inf)
        _check(r, f"sqz cbar vs closed form (in stderr, tolerance {tolerance_sigma:g})", float(np.max(zc)),
               tolerance_sigma)
        sym = est.symmetry_checks(s, tolerance_sigma)
        _check(r, f"central symmetry (in stderr, tolerance {tolerance_sigma:g})",
               max(sym.z_p11_p22, sym.z_p12_p21, sym.z_cbar), tolerance_sigma)
        other = est.run_novel(h, rep, est.EnsembleConfig(n_traj, seed, 0.0, times, threads=2))
        _check(r, "gamma and thread-count invariance (bit-exact)", float(not np.array_equal(other.pop, s.pop)), 0.0)

    def sqc():
        s = est.run_sqc_twf(h, cfg)
        _check(r, "sqc t=0 identity", float(np.max(np.abs(s.pop[0] - np.eye(2)))), 0.0)
        zc = np.abs(s.cbar[0] - 1.0) / np.maximum(s.cbar_stderr[0], 1e-300)
        _check(r, "sqc cbar(0) = 1", float(np.max(np.where(s.cbar_stderr[0] > 0, zc, np.abs(s.cbar[0] - 1)))),
               tolerance_sigma)

    for name, fn in (("closed forms", closed_forms), ("monte carlo", monte_carlo), ("sqc", sqc)):
        _guard(r, name, fn)
    return r


GROUPS = {
    "specfun": check_specfun,
    "partition": check_partition,
    "propagator": check_propagator,
    "representations": check_representations,
    "estimator": check_estimator,
}


def run_validation(groups=None, **estimator_kwargs) -> dict:
    """Run the named groups (default: all); return a JSON-ready summary."""
    names = list(GROUPS) if groups is None else list(groups)
    out = {"groups": {}}
    for name in names:
        if name not in GROUPS:
            raise ValueError(f"unknown validation group {name!r}")
        report = GROUPS[name](**estimator_kwargs) if name == "estimator" else GROUPS[name]()
        out["groups"][name] = {
            "passed": report.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "measured": c.measured if math.isfinite(c.measured) else None,
                 "tolerance": c.tolerance if math.isfinite(c.tolerance) else None}
                for c in report.checks
            ],
        }
    out["passed"] = all(g["passed"] for g in out["groups"].values())
    return out
