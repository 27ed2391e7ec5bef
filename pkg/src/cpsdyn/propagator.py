"""Exact propagation of a two-level system.

All functions are vectorised over the time argument: ``t`` may be a scalar or
a 1-D array, in which case the returned fields are arrays of the same shape.
Units: hbar = 1, energies and inverse times in the same arbitrary unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Reduce to [0, 2 pi); guards against mod() rounding up to exactly 2 pi."""
    out = np.mod(theta, TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class Hamiltonian2:
    """2x2 Hermitian matrix [[h11, h12], [conj(h12), h22]] with h12 = h12_re + i h12_im."""

    h11: float
    h22: float
    h12_re: float = 0.0
    h12_im: float = 0.0

    def __post_init__(self):
        for name in ("h11", "h22", "h12_re", "h12_im"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Hamiltonian2.{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def coupled(cls, lam: float, h11: float = 10.0, h22: float = 2.0) -> "Hamiltonian2":
        """Real symmetric model with coupling ``lam``; defaults are the benchmark diagonal."""
        return cls(h11, h22, lam, 0.0)

    @property
    def coupling_sq(self) -> float:
        return self.h12_re**2 + self.h12_im**2

    def matrix(self) -> np.ndarray:
        h12 = complex(self.h12_re, self.h12_im)
        return np.array([[self.h11, h12], [h12.conjugate(), self.h22]], dtype=complex)

    @property
    def norm_sq(self) -> float:
        """Squared Frobenius norm."""
        return self.h11**2 + self.h22**2 + 2.0 * self.coupling_sq


@dataclass(frozen=True)
class Unitary2:
    u11: complex | np.ndarray
    u12: complex | np.ndarray
    u21: complex | np.ndarray
    u22: complex | np.ndarray

    def matrix(self) -> np.ndarray:
        """Stack into shape (..., 2, 2)."""
        row1 = np.stack(np.broadcast_arrays(self.u11, self.u12), axis=-1)
        row2 = np.stack(np.broadcast_arrays(self.u21, self.u22), axis=-1)
        return np.stack([row1, row2], axis=-2)

    def unitarity_error(self) -> float:
        u = self.matrix()
        prod = np.conj(np.swapaxes(u, -1, -2)) @ u
        return float(np.max(np.abs(prod - np.eye(2))))


@dataclass(frozen=True)
class PropagatorAngles:
    """(xi, Phi, varphi, psi, Delta) of U = e^{-i Phi} [[e^{i psi} c, e^{i varphi} s], [-e^{-i varphi} s, e^{-i psi} c]]."""

    xi: float | np.ndarray
    phi_total: float | np.ndarray
    varphi: float | np.ndarray
    psi: float | np.ndarray
    delta: float

    def unitary(self) -> Unitary2:
        c, s = np.cos(self.xi), np.sin(self.xi)
        ph = np.exp(-1j * np.asarray(self.phi_total))
        return Unitary2(
            ph * np.exp(1j * np.asarray(self.psi)) * c,
            ph * np.exp(1j * np.asarray(self.varphi)) * s,
            -ph * np.exp(-1j * np.asarray(self.varphi)) * s,
            ph * np.exp(-1j * np.asarray(self.psi)) * c,
        )


@dataclass(frozen=True)
class Coefficients2:
    """State amplitudes g = x + i p; on the constraint surface |g1|^2 + |g2|^2 = 2(1 + 2 gamma)."""

    g1: complex | np.ndarray
    g2: complex | np.ndarray

    @property
    def norm_sq(self):
        return np.abs(self.g1) ** 2 + np.abs(self.g2) ** 2


def discriminant(h: Hamiltonian2) -> float:
    return (h.h22 - h.h11) ** 2 + 4.0 * h.coupling_sq


def _rotation_terms(h: Hamiltonian2, t):
    """(c, s, s / sqrt(Delta)) for the half-angle sqrt(Delta) t / 2.

    s / sqrt(Delta) is taken as (t/2) sinc(sqrt(Delta) t / 2), which stays exact as
    Delta -> 0, so near-degenerate levels need no separate branch and Delta = 0
    reduces to the scalar phase exp(-i h11 t).
    """
    root = math.sqrt(discriminant(h))
    half = 0.5 * root * t
    return np.cos(half), np.sin(half), 0.5 * t * np.sinc(half / np.pi)


def evolution_matrix(h: Hamiltonian2, t) -> Unitary2:
    """U(t) = exp(-i H t) from the closed-form 2x2 expression."""
    t = np.asarray(t, dtype=float)
    ph = np.exp(-0.5j * (h.h11 + h.h22) * t)
    c, _, s_root = _rotation_terms(h, t)
    d = (h.h22 - h.h11) * s_root
    return Unitary2(
        ph * (c + 1j * d),
        2.0 * ph * s_root * complex(h.h12_im, -h.h12_re),
        -2.0 * ph * s_root * complex(h.h12_im, h.h12_re),
        ph * (c - 1j * d),
    )


def propagator_angles(h: Hamiltonian2, t) -> PropagatorAngles:
    """Angle parameterisation of U(t) with xi in [0, pi/2] and varphi, psi in [0, 2 pi).

    Where the mixing vanishes (sin(sqrt(Delta) t / 2) = 0 or zero coupling)
    varphi is irrelevant to U and is set to 0.
    """
    t = np.asarray(t, dtype=float)
    delta = discriminant(h)
    phi_total = 0.5 * (h.h11 + h.h22) * t
    c, s, s_root = _rotation_terms(h, t)
    coupling = math.sqrt(h.coupling_sq)

    arg = 2.0 * np.abs(s_root) * coupling
    excess = np.max(arg) - 1.0 if arg.size else 0.0
    if excess > 1e-12:
        raise ArithmeticError(f"mixing-angle argument exceeds 1 by {excess:.3e}")
    xi = np.arcsin(np.clip(arg, 0.0, 1.0))

    # (cos psi, sin psi) is proportional to (c, s (H22 - H11)/sqrt(Delta)); atan2 drops the common cos(xi)
    psi = wrap_angle(np.arctan2(s_root * (h.h22 - h.h11), c))

    if coupling > 0.0:
        sign = np.sign(s)
        varphi = wrap_angle(np.arctan2(-sign * h.h12_re, sign * h.h12_im))
        varphi = np.where(sign == 0.0, 0.0, varphi)
    else:
        varphi = np.zeros_like(t)
    return PropagatorAngles(xi, phi_total, varphi, psi, delta)


def exact_population_matrix(h: Hamiltonian2, t) -> np.ndarray:
    """Entry (m, n) = |U_mn(t)|^2, shape (..., 2, 2)."""
    return np.abs(evolution_matrix(h, t).matrix()) ** 2


def propagate_coefficients(u: Unitary2, g0: Coefficients2) -> Coefficients2:
    return Coefficients2(u.u11 * g0.g1 + u.u12 * g0.g2, u.u21 * g0.g1 + u.u22 * g0.g2)


def ode_propagate(h: Hamiltonian2, g0: Coefficients2, t: float, dt: float) -> Coefficients2:
    """Integrate dg/dt = -i H g with classic fixed-step RK4; the last step is shortened to land on t."""
    t, dt = float(t), float(dt)
    if not (math.isfinite(t) and math.isfinite(dt)):
        raise ValueError("t and dt must be finite")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if t < 0.0:
        raise ValueError("t must be non-negative")

    m = -1j * h.matrix()
    g = np.array([g0.g1, g0.g2], dtype=complex)
    if not np.all(np.isfinite(g)):
        raise ValueError("initial coefficients must be finite")

    n_full = int(math.floor(t / dt + 1e-12))
    steps = [dt] * n_full
    rest = t - n_full * dt
    if rest > 1e-15 * max(1.0, t):
        steps.append(rest)
    for step in steps:
        k1 = m @ g
        k2 = m @ (g + 0.5 * step * k1)
        k3 = m @ (g + 0.5 * step * k2)
        k4 = m @ (g + step * k3)
        g = g + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Coefficients2(complex(g[0]), complex(g[1]))
