"""Mapping variables on the two-state constraint phase space.

Coordinates (x, p) and action-angle pairs (e, theta) are related by
x_j + i p_j = sqrt(2 e_j) exp(i theta_j).  On the constraint surface
e_1 + e_2 = 1 + 2 gamma and the scaled action difference
y = e_1 / (1 + 2 gamma) - 1/2 lies in [-1/2, 1/2].

Samplers draw in (y, theta_1, theta_d) space and only then build (x, p), so
that for a fixed random stream the y-trajectory is identical for every gamma.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .propagator import TWO_PI, PropagatorAngles, wrap_angle


def _check_gamma(gamma: float, f_states: int = 2) -> None:
    if not gamma > -1.0 / f_states:
        raise ValueError(f"gamma must exceed -1/{f_states}, got {gamma}")


@dataclass(frozen=True)
class PhasePoint:
    x1: float | np.ndarray
    x2: float | np.ndarray
    p1: float | np.ndarray
    p2: float | np.ndarray
    gamma: float = 0.5

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def radius_sq(self):
        return 1.0 + 2.0 * self.gamma

    def constraint_residual(self):
        half_sum = 0.5 * (self.x1**2 + self.p1**2 + self.x2**2 + self.p2**2)
        return np.abs(half_sum - self.radius_sq)

    @property
    def g1(self):
        return self.x1 + 1j * self.p1

    @property
    def g2(self):
        return self.x2 + 1j * self.p2

    @classmethod
    def from_coefficients(cls, g1, g2, gamma: float = 0.5) -> "PhasePoint":
        g1, g2 = np.asarray(g1), np.asarray(g2)
        return cls(g1.real, g2.real, g1.imag, g2.imag, gamma)


@dataclass(frozen=True)
class ActionAngle:
    e1: float | np.ndarray
    e2: float | np.ndarray
    th1: float | np.ndarray
    th2: float | np.ndarray
    gamma: float = 0.5

    @property
    def n1(self):
        return self.e1 - self.gamma

    @property
    def n2(self):
        return self.e2 - self.gamma


class WindowKind(enum.Enum):
    HALF_SPACE = "half-space"
    SQC_TRIANGLE = "sqc-triangle"
    SQC_BIN = "sqc-bin"


def to_action_angle(pt: PhasePoint) -> ActionAngle:
    e1 = 0.5 * (pt.x1**2 + pt.p1**2)
    e2 = 0.5 * (pt.x2**2 + pt.p2**2)
    th1 = np.where(e1 == 0.0, 0.0, wrap_angle(np.arctan2(pt.p1, pt.x1)))
    th2 = np.where(e2 == 0.0, 0.0, wrap_angle(np.arctan2(pt.p2, pt.x2)))
    if np.ndim(th1) == 0:
        th1, th2 = float(th1), float(th2)
    return ActionAngle(e1, e2, th1, th2, pt.gamma)


def from_action_angle(aa: ActionAngle) -> PhasePoint:
    e1, e2 = np.asarray(aa.e1, dtype=float), np.asarray(aa.e2, dtype=float)
    if np.any(e1 < 0.0) or np.any(e2 < 0.0):
        raise ValueError("actions must be non-negative")
    r1, r2 = np.sqrt(2.0 * e1), np.sqrt(2.0 * e2)
    x1, p1 = r1 * np.cos(aa.th1), r1 * np.sin(aa.th1)
    x2, p2 = r2 * np.cos(aa.th2), r2 * np.sin(aa.th2)
    if x1.ndim == 0:
        x1, x2, p1, p2 = float(x1), float(x2), float(p1), float(p2)
    return PhasePoint(x1, x2, p1, p2, aa.gamma)


def scaled_action_difference(pt: PhasePoint):
    return 0.5 * (pt.x1**2 + pt.p1**2) / pt.radius_sq - 0.5


def angle_difference(aa: ActionAngle):
    return wrap_angle(aa.th2 - aa.th1)


def y_t_closed_form(y0, th0d, ang: PropagatorAngles):
    """Scaled action difference at time t from (y0, theta_d at 0) and the propagator angles."""
    y0 = np.asarray(y0, dtype=float)
    if np.any(np.abs(y0) > 0.5):
        raise ValueError("y0 must lie in [-1/2, 1/2]")
    xi2 = 2.0 * np.asarray(ang.xi)
    amp = np.sqrt(np.maximum(0.25 - y0 * y0, 0.0))
    yt = y0 * np.cos(xi2) + amp * np.sin(xi2) * np.cos(ang.varphi - ang.psi + th0d)
    out = np.clip(yt, -0.5, 0.5)
    return out if out.ndim else float(out)


def cps_surface_volume(gamma: float, f_states: int) -> float:
    if f_states < 1:
        raise ValueError("f_states must be >= 1")
    _check_gamma(gamma, f_states)
    return TWO_PI**f_states * (1.0 + f_states * gamma) ** (f_states - 1) / math.factorial(f_states - 1)


# --- windows -----------------------------------------------------------------

def half_space_window(m: int, y):
    """K_11 = [y > 0], K_22 = [y <= 0]; the two partition the constraint surface."""
    if m == 1:
        return specfun.heaviside(y)
    if m == 2:
        return 1.0 - specfun.heaviside(y)
    raise ValueError(f"state index must be 1 or 2, got {m}")


def triangle_window(n: int, e1, e2):
    """SQC triangle sampling region for state n: 1 <= e_n <= 2, e_n + e_other <= 2."""
    en, eo = (e1, e2) if n == 1 else (e2, e1)
    en, eo = np.asarray(en), np.asarray(eo)
    return ((en >= 1.0) & (en <= 2.0) & (en + eo <= 2.0)).astype(float)


def bin_window(m: int, e1, e2):
    """SQC histogram bin for state m: e_m >= 1 and e_other <= 1."""
    em, eo = (e1, e2) if m == 1 else (e2, e1)
    return ((np.asarray(em) >= 1.0) & (np.asarray(eo) <= 1.0)).astype(float)


# --- samplers ----------------------------------------------------------------

def _check_state(n: int) -> None:
    if n not in (1, 2):
        raise ValueError(f"state index must be 1 or 2, got {n}")


def draw_cps(rng: np.random.Generator, size=None):
    """Uniform draw on the constraint surface in (y, theta_1, theta_d)."""
    u = rng.random(size)
    th1 = TWO_PI * rng.random(size)
    thd = TWO_PI * rng.random(size)
    return u - 0.5, th1, thd


def draw_half_space(n: int, rng: np.random.Generator, size=None):
    """Uniform draw restricted to the state-n half: y in (0, 1/2] for n=1, [-1/2, 0) for n=2."""
    _check_state(n)
    u = rng.random(size)
    th1 = TWO_PI * rng.random(size)
    thd = TWO_PI * rng.random(size)
    y = 0.5 * (1.0 - u)
    return (y if n == 1 else -y), th1, thd


def draw_triangle_actions(rng: np.random.Generator, size: int):
    """Rejection-sample (e_n, e_other) uniformly on the SQC triangle from the box [1,2] x [0,1].

    Returns (e_n, e_other, n_proposals).
    """
    e_n = np.empty(size)
    e_o = np.empty(size)
    filled = 0
    proposals = 0
    while filled < size:
        want = size - filled
        batch = 2 * want + 16
        a = rng.random(batch)
        b = rng.random(batch)
        ok = np.flatnonzero(a + b <= 1.0)
        take = ok[:want]
        # proposals past the last accepted one are discarded, not counted
        proposals += int(take[-1]) + 1 if len(take) == want else batch
        e_n[filled:filled + len(take)] = 1.0 + a[take]
        e_o[filled:filled + len(take)] = b[take]
        filled += len(take)
    return e_n, e_o, proposals


def _point_from_y(y, th1, thd, gamma: float) -> PhasePoint:
    radius_sq = 1.0 + 2.0 * gamma
    e1 = radius_sq * (np.asarray(y) + 0.5)
    e2 = radius_sq - e1
    return from_action_angle(ActionAngle(e1, np.maximum(e2, 0.0), th1, wrap_angle(th1 + thd), gamma))


def sample_cps(gamma: float, rng: np.random.Generator, size=None) -> PhasePoint:
    _check_gamma(gamma)
    return _point_from_y(*draw_cps(rng, size), gamma)


def sample_initial_window(n: int, kind: WindowKind, gamma: float, rng: np.random.Generator, size=None) -> PhasePoint:
    _check_gamma(gamma)
    _check_state(n)
    if kind is WindowKind.HALF_SPACE:
        return _point_from_y(*draw_half_space(n, rng, size), gamma)
    if kind is WindowKind.SQC_TRIANGLE:
        count = 1 if size is None else int(np.prod(size))
        e_n, e_o, _ = draw_triangle_actions(rng, count)
        th1 = TWO_PI * rng.random(count)
        th2 = TWO_PI * rng.random(count)
        e1, e2 = (e_n, e_o) if n == 1 else (e_o, e_n)
        if size is None:
            e1, e2, th1, th2 = e1[0], e2[0], th1[0], th2[0]
        else:
            shape = (size,) if np.isscalar(size) else tuple(size)
            e1, e2, th1, th2 = (a.reshape(shape) for a in (e1, e2, th1, th2))
        return from_action_angle(ActionAngle(e1, e2, th1, th2, gamma))
    raise ValueError(f"{kind} is a binning window, not an initial-condition window")
