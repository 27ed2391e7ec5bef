"""Monte Carlo and quadrature estimators of the population-population correlation |U_mn(t)|^2.

Every trajectory is propagated in closed form: for a two-level system the
population coordinate obeys

    y_t = y0 cos(2 xi) + sqrt(1/4 - y0^2) sin(2 xi) cos(varphi - psi + theta_d)

so each grid time needs only (cos 2xi, sin 2xi cos(varphi - psi), sin 2xi sin(varphi - psi)).

Random numbers come in fixed blocks of BLOCK_SIZE trajectories.  Block b of
initial state n uses its own Philox stream keyed by (seed, n, b), so results do
not depend on how blocks are scheduled over threads; partial moments are
merged in block order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import phase_space as ps
from . import specfun
from .propagator import Hamiltonian2, PropagatorAngles, propagator_angles
from .representations import HALF_PI, IsomorphismRep, sqz_closed_forms

BLOCK_SIZE = 4096
CBAR_FLOOR = 1e-6
STATES = (1, 2)


class DegenerateRepresentationError(ArithmeticError):
    """The estimated normalisation factor fell below CBAR_FLOOR."""


@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    seed: int
    gamma: float = 0.5
    times: np.ndarray = field(default_factory=lambda: np.zeros(1))
    threads: int = 1

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if times.ndim != 1 or times.size == 0:
            raise ValueError("time grid must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(times)):
            raise ValueError("time grid must be finite")
        if np.any(np.diff(times) < 0.0):
            raise ValueError("time grid must be non-decreasing")
        if int(self.n_traj) < 1:
            raise ValueError("n_traj must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.threads) < 1:
            raise ValueError("threads must be >= 1")
        ps._check_gamma(self.gamma)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "n_traj", int(self.n_traj))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_blocks(self) -> int:
        return -(-self.n_traj // BLOCK_SIZE)

    def block_sizes(self) -> list[int]:
        full, rest = divmod(self.n_traj, BLOCK_SIZE)
        return [BLOCK_SIZE] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class CorrelationEstimate:
    """One grid time.  Arrays indexed [n - 1, m - 1]; rows of an unrun initial state are NaN."""

    p: np.ndarray
    p_stderr: np.ndarray
    cbar: np.ndarray
    cbar_stderr: np.ndarray
    pop: np.ndarray
    stderr: np.ndarray
    xi: float


@dataclass(frozen=True)
class PopulationSeries:
    method: str
    times: np.ndarray
    xi: np.ndarray
    p: np.ndarray            # (T, 2, 2)
    p_stderr: np.ndarray
    cbar: np.ndarray         # (T, 2)
    cbar_stderr: np.ndarray
    pop: np.ndarray          # (T, 2, 2)
    stderr: np.ndarray
    n_traj: int
    states: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.times)

    def estimate(self, i: int) -> CorrelationEstimate:
        return CorrelationEstimate(self.p[i], self.p_stderr[i], self.cbar[i], self.cbar_stderr[i],
                                   self.pop[i], self.stderr[i], float(self.xi[i]))

    def __iter__(self):
        for i, t in enumerate(self.times):
            yield float(t), self.estimate(i)


# --- closed-form propagation of the population coordinate ---------------------

@dataclass(frozen=True)
class _Mixing:
    """Per-time coefficients of the closed-form y_t and e_1(t) updates."""

    cos2: np.ndarray        # cos 2xi
    sin2_cos: np.ndarray    # sin 2xi cos(varphi - psi)
    sin2_sin: np.ndarray    # sin 2xi sin(varphi - psi)
    cos_sq: np.ndarray
    sin_sq: np.ndarray

    @classmethod
    def from_angles(cls, ang: PropagatorAngles) -> "_Mixing":
        xi = np.atleast_1d(np.asarray(ang.xi, dtype=float))
        alpha = np.atleast_1d(np.asarray(ang.varphi, dtype=float) - np.asarray(ang.psi, dtype=float))
        s2 = np.sin(2.0 * xi)
        return cls(np.cos(2.0 * xi), s2 * np.cos(alpha), s2 * np.sin(alpha), np.cos(xi) ** 2, np.sin(xi) ** 2)

    def y_matrix(self) -> np.ndarray:
        return np.stack([self.cos2, self.sin2_cos, self.sin2_sin])

    def action_matrix(self) -> np.ndarray:
        return np.stack([self.cos_sq, self.sin_sq, self.sin2_cos, self.sin2_sin])


def _y_basis(y0, thd) -> np.ndarray:
    """Rows [y0, r0 cos thd, -r0 sin thd]; y_t = basis @ _Mixing.y_matrix()."""
    r0 = np.sqrt(np.maximum(0.25 - y0 * y0, 0.0))
    return np.stack([y0, r0 * np.cos(thd), -r0 * np.sin(thd)], axis=1)


def _propagate_y(y0, thd, mix: _Mixing):
    """y_t for every (trajectory, time); shape (N, T)."""
    yt = _y_basis(y0, thd) @ mix.y_matrix()
    return np.clip(yt, -0.5, 0.5, out=yt)


class _UniformTable:
    """Linear interpolation on a uniform grid over [0, 1/2]; O(1) per lookup.

    The last EDGE_CELLS cells call the generator directly: f may have an
    s log s edge at 1/2 where linear interpolation is too coarse.
    """

    EDGE_CELLS = 64

    def __init__(self, func: Callable, n: int = 2**16):
        self.n = n
        self.func = func
        y = np.linspace(0.0, 0.5, n + 1)
        vals = np.asarray(func(y), dtype=float)
        self.vals = np.append(vals, vals[-1])
        self.slope = np.diff(self.vals)
        self.edge = 0.5 * (n - self.EDGE_CELLS) / n

    def __call__(self, x):
        pos = x * (2.0 * self.n)
        idx = np.minimum(pos.astype(np.intp), self.n)
        out = self.vals[idx] + (pos - idx) * self.slope[idx]
        near = x > self.edge
        if near.any():
            out[near] = self.func(x[near])
        return out


# --- block drivers -----------------------------------------------------------

def _block_rng(seed: int, n: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(n, block))))


TIME_CHUNK = 64

# kernel(n, rng, size) draws a block and returns columns(time_slice) -> (A, B), each (size, len(slice)):
# the per-trajectory contributions to p_{n->1} and p_{n->2}
BlockKernel = Callable[[int, np.random.Generator, int], Callable[[slice], tuple[np.ndarray, np.ndarray]]]


def _block_moments(columns, size: int, n_times: int) -> specfun.StreamingMoments:
    mean = np.empty((n_times, 2))
    com = np.empty((n_times, 2, 2))
    for start in range(0, n_times, TIME_CHUNK):
        sl = slice(start, min(start + TIME_CHUNK, n_times))
        a, b = columns(sl)
        sa, sb = a.sum(axis=0), b.sum(axis=0)
        # raw second moments are safe within one block: values are O(1) and size is small
        com[sl, 0, 0] = np.einsum("nt,nt->t", a, a) - sa * sa / size
        com[sl, 1, 1] = np.einsum("nt,nt->t", b, b) - sb * sb / size
        com[sl, 0, 1] = com[sl, 1, 0] = np.einsum("nt,nt->t", a, b) - sa * sb / size
        mean[sl, 0] = sa / size
        mean[sl, 1] = sb / size
    return specfun.StreamingMoments.from_moments(size, mean, com)


def _accumulate(cfg: EnsembleConfig, n: int, kernel: BlockKernel, n_times: int) -> specfun.StreamingMoments:
    """Moments of the per-trajectory contributions for initial state n, merged over blocks in order."""
    sizes = cfg.block_sizes()

    def one(block: int) -> specfun.StreamingMoments:
        size = sizes[block]
        return _block_moments(kernel(n, _block_rng(cfg.seed, n, block), size), size, n_times)

    total = specfun.StreamingMoments((n_times,), 2)
    if cfg.threads == 1:
        for b in range(len(sizes)):
            total.merge(one(b))
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for part in pool.map(one, range(len(sizes))):
                total.merge(part)
    return total


def _empty_series(method, cfg, xi, states) -> dict:
    t = len(cfg.times)
    nan = lambda *shape: np.full((t,) + shape, np.nan)  # noqa: E731
    return dict(method=method, times=cfg.times, xi=np.asarray(xi, dtype=float) * np.ones(t),
                p=nan(2, 2), p_stderr=nan(2, 2), cbar=nan(2), cbar_stderr=nan(2),
                pop=nan(2, 2), stderr=nan(2, 2), n_traj=cfg.n_traj, states=tuple(states))


def _check_states(states) -> tuple[int, ...]:
    states = tuple(sorted(set(int(s) for s in states)))
    if not states or any(s not in STATES for s in states):
        raise ValueError("initial states must be a non-empty subset of {1, 2}")
    return states


def _ratio_fill(out: dict, n: int, mom: specfun.StreamingMoments, method: str) -> None:
    """Windowed methods: pop = p / cbar with cbar = p_1 + p_2, stderr by the delta method."""
    i = n - 1
    mean, cov, count = mom.mean, mom.covariance, mom.count
    a, b = mean[:, 0], mean[:, 1]
    va, vb, cab = cov[:, 0, 0], cov[:, 1, 1], cov[:, 0, 1]
    cbar = a + b
    bad = np.flatnonzero(~(cbar >= CBAR_FLOOR))
    if bad.size:
        k = bad[0]
        raise DegenerateRepresentationError(
            f"{method}: normalisation factor {cbar[k]:.3e} < {CBAR_FLOOR:g} at t = {out['times'][k]:.6g} "
            f"(initial state {n}); the representation cannot normalise this ensemble")
    out["p"][:, i, :] = mean
    out["p_stderr"][:, i, :] = mom.stderr
    out["cbar"][:, i] = cbar
    out["cbar_stderr"][:, i] = np.sqrt(np.maximum(va + vb + 2.0 * cab, 0.0) / count)
    # divide for the smaller share and complement for the larger one: the row then sums to 1
    # exactly in floating point and the small share keeps full relative precision
    small = np.minimum(a, b) / cbar
    large = 1.0 - small
    first_small = a <= b
    out["pop"][:, i, 0] = np.where(first_small, small, large)
    out["pop"][:, i, 1] = np.where(first_small, large, small)
    # d(a/(a+b)) = (b da - a db)/(a+b)^2; the same magnitude for b/(a+b)
    var_ratio = (b * b * va - 2.0 * a * b * cab + a * a * vb) / cbar**4
    err = np.sqrt(np.maximum(var_ratio, 0.0) / count)
    out["stderr"][:, i, 0] = err
    out["stderr"][:, i, 1] = err


def _finish(out: dict) -> PopulationSeries:
    for key in ("p", "p_stderr", "cbar", "cbar_stderr", "pop", "stderr", "xi"):
        out[key].setflags(write=False)
    return PopulationSeries(**out)


# --- novel class ---------------------------------------------------------------

def novel_from_angles(ang: PropagatorAngles, rep: IsomorphismRep, cfg: EnsembleConfig,
                      states=STATES, f_lookup: Callable | None = None) -> PopulationSeries:
    """Novel-class estimate given precomputed propagator angles on the config grid."""
    states = _check_states(states)
    mix = _Mixing.from_angles(ang)
    if len(mix.cos2) != len(cfg.times):
        raise ValueError("angles do not match the time grid")
    f = f_lookup or _UniformTable(rep.f)
    n_times = len(cfg.times)
    q = mix.y_matrix()

    def kernel(n, rng, size):
        # the half-window has unit measure under uniform y0, so the sample mean is p directly
        y0, _th1, thd = ps.draw_half_space(n, rng, size)
        basis = _y_basis(y0, thd)
        ay0 = np.abs(y0)[:, None]

        def columns(sl):
            yt = basis @ q[:, sl]
            np.clip(yt, -0.5, 0.5, out=yt)
            x = np.abs(yt)
            np.minimum(x, ay0, out=x)
            w = f(x)
            return w * ps.half_space_window(1, yt), w * ps.half_space_window(2, yt)

        return columns

    out = _empty_series(f"novel[{rep.name}]", cfg, ang.xi, states)
    for n in states:
        _ratio_fill(out, n, _accumulate(cfg, n, kernel, n_times), out["method"])
    return _finish(out)


def run_novel(h: Hamiltonian2, rep: IsomorphismRep, cfg: EnsembleConfig, states=STATES) -> PopulationSeries:
    return novel_from_angles(propagator_angles(h, cfg.times), rep, cfg, states)


# --- original SQC with triangle windows ----------------------------------------

def sqc_from_angles(ang: PropagatorAngles, cfg: EnsembleConfig, states=STATES) -> PopulationSeries:
    states = _check_states(states)
    q = _Mixing.from_angles(ang).action_matrix()
    n_times = len(cfg.times)

    def kernel(n, rng, size):
        e_n, e_o, _ = ps.draw_triangle_actions(rng, size)
        thd = ps.TWO_PI * rng.random(size)
        e1, e2 = (e_n, e_o) if n == 1 else (e_o, e_n)
        root = np.sqrt(e1 * e2)
        # |(U g)_1|^2 / 2 with g_j = sqrt(2 e_j) exp(i theta_j), theta_d = theta_2 - theta_1
        basis = np.stack([e1, e2, root * np.cos(thd), -root * np.sin(thd)], axis=1)
        total = (e1 + e2)[:, None]

        def columns(sl):
            e1t = basis @ q[:, sl]
            e2t = total - e1t
            return ps.bin_window(1, e1t, e2t), ps.bin_window(2, e1t, e2t)

        return columns

    out = _empty_series("sqc-twf", cfg, ang.xi, states)
    for n in states:
        _ratio_fill(out, n, _accumulate(cfg, n, kernel, n_times), "sqc-twf")
    return _finish(out)


def run_sqc_twf(h: Hamiltonian2, cfg: EnsembleConfig, states=STATES) -> PopulationSeries:
    return sqc_from_angles(propagator_angles(h, cfg.times), cfg, states)


# --- covariant CPS estimator ---------------------------------------------------

def covariant_from_angles(ang: PropagatorAngles, gamma: float, cfg: EnsembleConfig,
                          states=STATES) -> PopulationSeries:
    """2 * mean[(e_n(0) - gamma) * (3 e_m(t)/R^2 - (1 - gamma)/R)], R = 1 + 2 gamma; unnormalised."""
    ps._check_gamma(gamma)
    states = _check_states(states)
    q = _Mixing.from_angles(ang).y_matrix()
    n_times = len(cfg.times)
    radius = 1.0 + 2.0 * gamma
    offset = (1.0 - gamma) / radius

    def kernel(n, rng, size):
        y0, _th1, thd = ps.draw_cps(rng, size)
        basis = _y_basis(y0, thd)
        sign = 1.0 if n == 1 else -1.0
        k0 = (2.0 * (radius * (0.5 + sign * y0) - gamma))[:, None]

        def columns(sl):
            yt = basis @ q[:, sl]
            np.clip(yt, -0.5, 0.5, out=yt)
            e1t = radius * (0.5 + yt)
            return k0 * (3.0 * e1t / radius**2 - offset), k0 * (3.0 * (radius - e1t) / radius**2 - offset)

        return columns

    out = _empty_series("covariant", cfg, ang.xi, states)
    for n in states:
        mom = _accumulate(cfg, n, kernel, n_times)
        i = n - 1
        cov = mom.covariance
        out["p"][:, i, :] = mom.mean
        out["p_stderr"][:, i, :] = mom.stderr
        out["cbar"][:, i] = mom.mean.sum(axis=1)
        out["cbar_stderr"][:, i] = np.sqrt(np.maximum(cov[:, 0, 0] + cov[:, 1, 1] + 2 * cov[:, 0, 1], 0) / mom.count)
        out["pop"][:, i, :] = mom.mean
        out["stderr"][:, i, :] = mom.stderr
    return _finish(out)


def run_covariant(h: Hamiltonian2, gamma: float, cfg: EnsembleConfig, states=STATES) -> PopulationSeries:
    return covariant_from_angles(propagator_angles(h, cfg.times), gamma, cfg, states)


# --- deterministic references ----------------------------------------------------

def quadrature_oracle_p(rep: IsomorphismRep, xi: float, order: int = 64) -> tuple[float, float]:
    """(p11, p12) by nested Gauss-Legendre quadrature over the (s, tau) polar parameterisation.

    p11 = (2/pi) int_0^{pi/2} ds int_0^{pi/2 - xi} dtau sin(s) f(sin(s) sin(tau) / 2); p12 has upper limit xi.
    """
    xi = float(xi)
    if not 0.0 < xi < HALF_PI:
        raise ValueError("quadrature oracle needs 0 < xi < pi/2 (sin 2xi != 0)")
    rule = specfun.gauss_legendre(order)
    # graded s-panels towards pi/2, where f may have a log-type derivative at y = 1/2
    edges = np.concatenate([[0.0], HALF_PI - 0.25 * np.pi * 0.5 ** np.arange(16), [HALF_PI]])
    s_nodes, s_w = zip(*(rule.on_interval(a, b) for a, b in zip(edges[:-1], edges[1:])))
    s, ws = np.concatenate(s_nodes), np.concatenate(s_w)

    def inner(upper):
        tau, wt = rule.on_interval(0.0, upper)
        vals = np.sin(s)[:, None] * rep.f(np.sin(s)[:, None] * np.sin(tau)[None, :] / 2.0)
        return float(ws @ vals @ wt) * 2.0 / np.pi

    return inner(HALF_PI - xi), inner(xi)


@dataclass(frozen=True)
class SymmetryReport:
    """Largest z-scores |a - b| / combined stderr over the grid for each symmetry."""

    z_p11_p22: float
    z_p12_p21: float
    z_cbar: float
    tolerance: float = 3.0

    @property
    def passed(self) -> bool:
        return max(self.z_p11_p22, self.z_p12_p21, self.z_cbar) <= self.tolerance

    def as_dict(self) -> dict:
        return {"p11=p22": self.z_p11_p22, "p12=p21": self.z_p12_p21, "cbar(1)=cbar(2)": self.z_cbar,
                "tolerance": self.tolerance, "passed": self.passed}


def _max_z(a, b, sa, sb) -> float:
    diff = np.abs(a - b)
    sigma = np.sqrt(sa**2 + sb**2)
    z = np.where(sigma > 0, diff / np.where(sigma > 0, sigma, 1.0), np.where(diff > 1e-15, np.inf, 0.0))
    return float(np.max(z))


def symmetry_checks(series: PopulationSeries, tolerance: float = 3.0) -> SymmetryReport:
    """p11 = p22, p12 = p21 and cbar(n=1) = cbar(n=2) at every grid time, in units of combined stderr."""
    if set(series.states) != set(STATES):
        raise ValueError("symmetry checks need a series run from both initial states")
    p, e = series.p, series.p_stderr
    return SymmetryReport(
        _max_z(p[:, 0, 0], p[:, 1, 1], e[:, 0, 0], e[:, 1, 1]),
        _max_z(p[:, 0, 1], p[:, 1, 0], e[:, 0, 1], e[:, 1, 0]),
        _max_z(series.cbar[:, 0], series.cbar[:, 1], series.cbar_stderr[:, 0], series.cbar_stderr[:, 1]),
        tolerance,
    )


__all__ = [
    "BLOCK_SIZE", "CBAR_FLOOR", "CorrelationEstimate", "DegenerateRepresentationError", "EnsembleConfig",
    "PopulationSeries", "SymmetryReport", "covariant_from_angles", "novel_from_angles", "quadrature_oracle_p",
    "run_covariant", "run_novel", "run_sqc_twf", "sqc_from_angles", "sqz_closed_forms", "symmetry_checks",
]
