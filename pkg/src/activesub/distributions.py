"""Sampling densities on the full space.

Two families are supported: the standard normal on R^n and the uniform
distribution on a bounded convex body (axis-aligned box or Euclidean
ball).  Each distribution knows its density, how to draw i.i.d. samples
from a supplied generator, and a support membership test.  All instances
are immutable and safe to share across workers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError

__all__ = [
    "StandardNormal",
    "UniformBox",
    "UniformBall",
    "Distribution",
    "PoincareConstant",
    "poincare_constant",
    "projected_diameter",
]


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Normalize ``x`` to shape (m, dim); report whether input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ArgumentError(f"point has dimension {arr.shape[0]}, expected {dim}")
        return arr[None, :], True
    if arr.ndim == 2:
        if arr.shape[1] != dim:
            raise ArgumentError(f"points have dimension {arr.shape[1]}, expected {dim}")
        return arr, False
    raise ArgumentError("expected a point (n,) or a batch of points (m, n)")


class StandardNormal:
    """Standard normal N(0, I) on R^n; support is all of R^n."""

    kind = "standard_normal"

    def __init__(self, dim: int):
        if dim < 1:
            raise ArgumentError("dimension must be >= 1")
        self.dim = int(dim)
        self._log_norm = -0.5 * self.dim * math.log(2.0 * math.pi)

    def density(self, x):
        pts, single = _as_points(x, self.dim)
        vals = np.exp(self._log_norm - 0.5 * np.einsum("ij,ij->i", pts, pts))
        return float(vals[0]) if single else vals

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 1:
            raise ArgumentError("count must be >= 1")
        return rng.standard_normal((count, self.dim))

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        res = np.ones(pts.shape[0], dtype=bool)
        return bool(res[0]) if single else res

    def __repr__(self):
        return f"StandardNormal(dim={self.dim})"


class UniformBox:
    """Uniform distribution on the axis-aligned box [lo, hi]^n."""

    kind = "uniform_box"

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.ndim != 1 or self.lo.shape != self.hi.shape:
            raise ArgumentError("lo and hi must be 1-D arrays of equal length")
        if not np.all(self.hi > self.lo):
            raise ArgumentError("box must have positive volume (hi > lo componentwise)")
        self.dim = self.lo.shape[0]
        self.volume = float(np.prod(self.hi - self.lo))

    def density(self, x):
        pts, single = _as_points(x, self.dim)
        inside = self._contains_batch(pts)
        vals = np.where(inside, 1.0 / self.volume, 0.0)
        return float(vals[0]) if single else vals

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 1:
            raise ArgumentError("count must be >= 1")
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def _contains_batch(self, pts: np.ndarray) -> np.ndarray:
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        res = self._contains_batch(pts)
        return bool(res[0]) if single else res

    def vertices(self) -> np.ndarray:
        """All 2^n corner points; only sensible at small n."""
        if self.dim > 20:
            raise ArgumentError("vertex enumeration limited to dimension <= 20")
        combos = np.array(list(itertools.product(*zip(self.lo, self.hi))))
        return combos

    def __repr__(self):
        return f"UniformBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class UniformBall:
    """Uniform distribution on the Euclidean ball B(center, radius)."""

    kind = "uniform_ball"

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        if self.center.ndim != 1:
            raise ArgumentError("center must be a 1-D array")
        if radius <= 0:
            raise ArgumentError("radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.shape[0]
        n = self.dim
        self.volume = math.pi ** (n / 2.0) * self.radius**n / math.gamma(n / 2.0 + 1.0)

    def density(self, x):
        pts, single = _as_points(x, self.dim)
        inside = self._contains_batch(pts)
        vals = np.where(inside, 1.0 / self.volume, 0.0)
        return float(vals[0]) if single else vals

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 1:
            raise ArgumentError("count must be >= 1")
        # Direction uniform on the sphere, radius ~ r * U^(1/n).
        dirs = rng.standard_normal((count, self.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = self.radius * rng.random(count) ** (1.0 / self.dim)
        return self.center + dirs * radii[:, None]

    def _contains_batch(self, pts: np.ndarray) -> np.ndarray:
        d2 = np.einsum("ij,ij->i", pts - self.center, pts - self.center)
        return d2 <= self.radius**2

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        res = self._contains_batch(pts)
        return bool(res[0]) if single else res

    def __repr__(self):
        return f"UniformBall(center={self.center.tolist()}, radius={self.radius})"


Distribution = StandardNormal | UniformBox | UniformBall


@dataclass(frozen=True)
class PoincareConstant:
    """Poincare constant with its provenance.

    ``gaussian_unit`` is exactly 1; ``uniform_diam`` equals the diameter of
    the projected support divided by pi.
    """

    value: float
    provenance: str  # "gaussian_unit" | "uniform_diam"


def projected_diameter(dist: Distribution, w2: np.ndarray) -> float:
    """Diameter of the support projected onto the columns of ``w2``.

    For a ball the projection is again a ball of the same radius.  For a
    box the maximum of ||w2^T (v - v')|| over vertex pairs is attained at
    sign patterns s in {-1, 1}^n of the edge-length vector, which keeps
    the enumeration at 2^n instead of 4^n.
    """
    if w2.ndim != 2 or w2.shape[0] != dist.dim:
        raise ArgumentError("w2 must have shape (n, n - k)")
    m = w2.shape[1]
    if m == 0:
        return 0.0
    if isinstance(dist, UniformBall):
        return 2.0 * dist.radius
    if isinstance(dist, UniformBox):
        n = dist.dim
        if n > 20:
            raise ArgumentError("box diameter enumeration limited to dimension <= 20")
        b = w2.T * (dist.hi - dist.lo)  # (m, n)
        best = 0.0
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
        chunk = 65536
        for start in range(0, signs.shape[0], chunk):
            block = signs[start : start + chunk]
            norms = np.linalg.norm(block @ b.T, axis=1)
            best = max(best, float(norms.max()))
        return best
    raise NotImplementedError(f"no projected diameter for {type(dist).__name__}")


def poincare_constant(dist: Distribution, subspace) -> PoincareConstant:
    """Poincare constant of the conditional distribution on the inactive slice.

    Gaussian case: exactly 1.  Uniform-on-convex case: the global bound
    diam(Z)/pi over all slices, with Z the projection of the support onto
    the inactive directions.
    """
    if isinstance(dist, StandardNormal):
        return PoincareConstant(1.0, "gaussian_unit")
    if isinstance(dist, (UniformBox, UniformBall)):
        diam = projected_diameter(dist, subspace.w2)
        return PoincareConstant(diam / math.pi, "uniform_diam")
    raise NotImplementedError(f"no Poincare constant rule for {type(dist).__name__}")
