"""Special functions and small numerical primitives.

Elliptic integrals use the *parameter* convention ``m = k**2`` throughout::

    K(m) = int_0^{pi/2} dtheta / sqrt(1 - m sin^2 theta)
    E(m) = int_0^{pi/2} sqrt(1 - m sin^2 theta) dtheta

so ``K(4*y**2)`` means parameter ``4 y^2``, not modulus.  Passing the modulus
instead is a classic silent error; the validation suite has a fixture for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

_AGM_MAX_ITER = 64


def _agm_from(b, c):
    """Run the AGM from (1, b) with c0 = sqrt(1 - b^2); return (a_final, sum_n 2^(n-1) c_n^2)."""
    a = np.ones_like(b)
    acc = 0.5 * c * c
    power = 0.5
    for _ in range(_AGM_MAX_ITER):
        # stop on the relative gap, not equality: a and b can settle one ulp apart,
        # and 2^n c_n^2 would then keep growing
        if np.all(np.abs(a - b) <= 4e-16 * a):
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        power *= 2.0
        acc = acc + power * c * c
    return a, acc


def _agm_terms(m):
    m = np.asarray(m, dtype=float)
    return _agm_from(np.sqrt(1.0 - m), np.sqrt(m))


def _check_unit_interval(m, upper_inclusive: bool, name: str):
    m = np.asarray(m, dtype=float)
    bad = ~np.isfinite(m) | (m < 0.0) | ((m > 1.0) if upper_inclusive else (m >= 1.0))
    if np.any(bad):
        bound = "[0, 1]" if upper_inclusive else "[0, 1)"
        raise ValueError(f"{name}: parameter m must lie in {bound}")
    return m


def ellipk(m):
    """Complete elliptic integral of the first kind K(m), m in [0, 1)."""
    m = _check_unit_interval(m, upper_inclusive=False, name="ellipk")
    a, _ = _agm_terms(m)
    out = np.pi / (2.0 * a)
    return out if out.ndim else float(out)


def ellipe(m):
    """Complete elliptic integral of the second kind E(m), m in [0, 1]."""
    m = _check_unit_interval(m, upper_inclusive=True, name="ellipe")
    one = m == 1.0
    safe = np.where(one, 0.5, m)
    a, acc = _agm_terms(safe)
    out = np.where(one, 1.0, np.pi / (2.0 * a) * (1.0 - acc))
    return out if out.ndim else float(out)


def ellipke_complement(m1):
    """(K(m), E(m)) given the complementary parameter m1 = 1 - m, m1 in (0, 1].

    Starting the AGM from (1, sqrt(m1)) keeps full relative precision in m1,
    which matters near m = 1 where 1 - m would cancel.
    """
    m1 = np.asarray(m1, dtype=float)
    if np.any(~(m1 > 0.0)) or np.any(m1 > 1.0):
        raise ValueError("ellipke_complement: m1 must lie in (0, 1]")
    a, acc = _agm_from(np.sqrt(m1), np.sqrt(np.maximum(1.0 - m1, 0.0)))
    k = np.pi / (2.0 * a)
    e = k * (1.0 - acc)
    if k.ndim:
        return k, e
    return float(k), float(e)


def arctanh(x):
    """Inverse hyperbolic tangent, rejecting |x| >= 1."""
    x = np.asarray(x, dtype=float)
    if np.any(~(np.abs(x) < 1.0)):
        raise ValueError("arctanh: |x| must be < 1")
    # log1p form keeps full relative accuracy near zero and is exactly odd
    out = 0.5 * (np.log1p(x) - np.log1p(-x))
    return out if out.ndim else float(out)


def heaviside(y):
    """Step function with h(0) = 0, so h(y) + h(-y) = 1 everywhere except y = 0."""
    out = (np.asarray(y) > 0).astype(float)
    return out if out.ndim else float(out)


def positive_part(a):
    """[a]_+ = a if a > 0 else 0."""
    out = np.maximum(np.asarray(a, dtype=float), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    def on_interval(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights

    def integrate(self, func, a: float, b: float) -> float:
        x, w = self.on_interval(a, b)
        return float(np.sum(w * func(x)))


@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> QuadratureRule:
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


@dataclass
class StreamingMoments:
    """Mergeable single-pass mean and co-moment accumulator.

    Each observation is a vector of length ``dim`` per channel; ``channels``
    is an arbitrary leading shape (e.g. one channel per time-grid point).
    ``comoment`` holds sum((x - mean)(x - mean)^T) over observations, updated
    with the pairwise (Chan et al.) formula so that merging partial results
    matches accumulating the concatenated data.
    """

    channels: tuple[int, ...] = ()
    dim: int = 1
    count: int = 0
    mean: np.ndarray = field(init=False)
    comoment: np.ndarray = field(init=False)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.mean = np.zeros(self.channels + (self.dim,))
        self.comoment = np.zeros(self.channels + (self.dim, self.dim))

    @classmethod
    def from_moments(cls, count: int, mean, comoment) -> "StreamingMoments":
        """Accumulator holding ``count`` observations already summarised by mean and co-moment."""
        mean = np.asarray(mean, dtype=float)
        out = cls(mean.shape[:-1], mean.shape[-1])
        if count > 0:
            out.count, out.mean, out.comoment = int(count), mean.copy(), np.asarray(comoment, dtype=float).copy()
        return out

    def push(self, x) -> None:
        """Add one observation of shape channels + (dim,) (scalars allowed when dim=1)."""
        x = np.asarray(x, dtype=float).reshape((1,) + self.channels + (self.dim,))
        self.push_batch(x)

    def push_batch(self, xs) -> None:
        """Add a batch; axis 0 indexes observations."""
        xs = np.asarray(xs, dtype=float)
        if self.dim == 1 and xs.shape == (xs.shape[0],) + self.channels:
            xs = xs[..., None]
        n = xs.shape[0]
        if n == 0:
            return
        bmean = xs.mean(axis=0)
        dev = xs - bmean
        bcom = np.einsum("n...i,n...j->...ij", dev, dev)
        other = StreamingMoments(self.channels, self.dim)
        other.count, other.mean, other.comoment = n, bmean, bcom
        self.merge(other)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.channels != self.channels or other.dim != self.dim:
            raise ValueError("cannot merge accumulators of different shape")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean.copy()
            self.comoment = other.comoment.copy()
            return self
        n_a, n_b = self.count, other.count
        n = n_a + n_b
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.comoment = (
            self.comoment
            + other.comoment
            + np.einsum("...i,...j->...ij", delta, delta) * (n_a * n_b / n)
        )
        self.count = n
        return self

    @property
    def covariance(self) -> np.ndarray:
        """Unbiased sample covariance (zeros when count < 2)."""
        if self.count < 2:
            return np.zeros_like(self.comoment)
        return self.comoment / (self.count - 1)

    @property
    def variance(self) -> np.ndarray:
        return np.diagonal(self.covariance, axis1=-2, axis2=-1)

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the mean, per component."""
        if self.count < 1:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance / self.count)
