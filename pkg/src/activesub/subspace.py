"""Gradient covariance estimation, eigendecomposition, and subspace splits.

The central object is the matrix C = E[grad f grad f^T] under the sampling
density.  Its eigendecomposition C = W diag(lambda) W^T, split after a
spectral gap at index k, yields the active directions W1 (first k columns)
and the inactive directions W2.  Controlled orthogonal perturbations of W
support the stability analysis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .distributions import Distribution
from .exceptions import ArgumentError, NumericError
from .rng import ordered_map, substream

__all__ = [
    "QuadraticForm",
    "GradientFunction",
    "ActiveSubspace",
    "PerturbedSubspace",
    "estimate_c",
    "exact_c_quadratic",
    "eigendecompose",
    "choose_k",
    "split",
    "coords",
    "reconstruct",
    "perturb",
]

ORTHO_TOL = 1e-10
RECON_TOL = 1e-8


@dataclass(frozen=True)
class QuadraticForm:
    """f(x) = 1/2 x^T H x + b^T x + c with symmetric H.

    Carries everything needed for closed-form conditional expectations
    under a Gaussian weight and for exact gradient covariances.
    """

    h: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ArgumentError("H must be square")
        scale = max(1.0, float(np.abs(h).max()))
        if np.abs(h - h.T).max() > 1e-12 * scale:
            raise ArgumentError("H must be symmetric")
        if b.shape != (h.shape[0],):
            raise ArgumentError("b must have shape (n,)")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return 0.5 * np.einsum("ij,ij->i", x @ self.h, x) + x @ self.b + self.c

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.h + self.b

    def exact_gradient_covariance(self) -> np.ndarray:
        """E[(Hx + b)(Hx + b)^T] under x ~ N(0, I), i.e. H^2 + b b^T."""
        return self.h @ self.h + np.outer(self.b, self.b)


@dataclass(frozen=True)
class GradientFunction:
    """A scalar function with its gradient, both batch-evaluable.

    ``f`` maps (m, n) -> (m,), ``grad`` maps (m, n) -> (m, n).  When the
    function is a quadratic form the ``quadratic`` tag enables closed-form
    shortcuts downstream.
    """

    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    quadratic: QuadraticForm | None = None

    @classmethod
    def from_quadratic(cls, q: QuadraticForm) -> "GradientFunction":
        return cls(dim=q.dim, f=q.value, grad=q.gradient, quadratic=q)

    def value(self, x):
        pts, single = self._as_points(x)
        vals = np.asarray(self.f(pts), dtype=float).reshape(pts.shape[0])
        return float(vals[0]) if single else vals

    def gradient(self, x):
        pts, single = self._as_points(x)
        g = np.asarray(self.grad(pts), dtype=float).reshape(pts.shape)
        return g[0] if single else g

    def _as_points(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            if arr.shape[0] != self.dim:
                raise ArgumentError(f"point has dimension {arr.shape[0]}, expected {self.dim}")
            return arr[None, :], True
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise ArgumentError(f"expected points of dimension {self.dim}")
        return arr, False

    def validate_gradient(self, rng: np.random.Generator, points: int = 20, scale: float = 1.0) -> float:
        """Check grad against central finite differences at random probes.

        Raises NumericError when any component misses the tolerance
        max(1e-5, 1e-4 * ||grad||) at a probe point; returns the largest
        absolute deviation observed.
        """
        worst = 0.0
        probes = scale * rng.standard_normal((points, self.dim))
        for x in probes:
            g = self.gradient(x)
            fd = np.empty(self.dim)
            for i in range(self.dim):
                h = 1e-6 * max(1.0, abs(x[i]))
                e = np.zeros(self.dim)
                e[i] = h
                fd[i] = (self.value(x + e) - self.value(x - e)) / (2.0 * h)
            err = float(np.abs(g - fd).max())
            tol = max(1e-5, 1e-4 * float(np.linalg.norm(g)))
            if err > tol:
                raise NumericError(
                    f"gradient check failed at {x}: max deviation {err:.3e} > tol {tol:.3e}"
                )
            worst = max(worst, err)
        return worst


def _check_orthogonal(w: np.ndarray, label: str, tol: float = ORTHO_TOL) -> None:
    gram = w.T @ w
    err = np.abs(gram - np.eye(w.shape[1])).max()
    if err > tol:
        raise NumericError(f"{label} is not orthogonal: max |W^T W - I| = {err:.3e}")


@dataclass(frozen=True)
class ActiveSubspace:
    """Eigendecomposition of a gradient covariance, split at index k.

    eigenvalues are sorted descending and clamped at zero; ``w`` is the
    orthogonal eigenvector matrix; columns before k span the active
    subspace.  ``c_hat`` is the (symmetric PSD) matrix that was
    decomposed, kept for the reconstruction invariant.
    """

    eigenvalues: np.ndarray
    w: np.ndarray
    k: int
    c_hat: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        w = np.asarray(self.w, dtype=float)
        c = np.asarray(self.c_hat, dtype=float)
        n = w.shape[0]
        if w.shape != (n, n) or lam.shape != (n,) or c.shape != (n, n):
            raise ArgumentError("inconsistent shapes for eigenvalues, W, and C")
        if not (1 <= self.k <= n - 1):
            raise ArgumentError(f"split index k={self.k} out of range [1, {n - 1}]")
        if np.any(np.diff(lam) > 0):
            raise ArgumentError("eigenvalues must be sorted descending")
        if lam[-1] < 0:
            raise ArgumentError("eigenvalues must be nonnegative (clamp before constructing)")
        _check_orthogonal(w, "W")
        recon_err = np.abs((w * lam) @ w.T - c).max()
        if recon_err > RECON_TOL * (1.0 + np.abs(c).max()):
            raise NumericError(f"W diag(lambda) W^T does not reconstruct C: {recon_err:.3e}")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c_hat", c)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def w1(self) -> np.ndarray:
        return self.w[:, : self.k]

    @property
    def w2(self) -> np.ndarray:
        return self.w[:, self.k :]

    @property
    def active_sum(self) -> float:
        return float(self.eigenvalues[: self.k].sum())

    @property
    def inactive_sum(self) -> float:
        return float(self.eigenvalues[self.k :].sum())


@dataclass(frozen=True)
class PerturbedSubspace:
    """An orthogonal frame within spectral distance epsilon of a base subspace.

    Exposes the same (n, k, w, w1, w2) surface as ActiveSubspace so that
    downstream code can work with either; the split index is inherited
    from the base.
    """

    base: ActiveSubspace
    w: np.ndarray
    epsilon: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != self.base.w.shape:
            raise ArgumentError("perturbed frame must match the base shape")
        _check_orthogonal(w, "W_hat")
        dist = float(np.linalg.norm(self.base.w - w, 2))
        if dist > self.epsilon * (1.0 + 1e-9) + 1e-14:
            raise NumericError(f"||W - W_hat||_2 = {dist:.3e} exceeds epsilon = {self.epsilon:.3e}")
        # Consequences of the perturbation bound for the split blocks.
        eps_tol = self.epsilon * (1.0 + 1e-9) + 1e-12
        k = self.base.k
        if np.linalg.norm(self.base.w1.T @ w[:, k:], 2) > eps_tol:
            raise NumericError("||W1^T W2_hat||_2 exceeds epsilon")
        if np.linalg.norm(w[:, k:].T @ self.base.w1, 2) > eps_tol:
            raise NumericError("||W2_hat^T W1||_2 exceeds epsilon")
        if np.linalg.norm(self.base.w2.T @ w[:, k:], 2) > 1.0 + 1e-12:
            raise NumericError("||W2^T W2_hat||_2 exceeds 1")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def k(self) -> int:
        return self.base.k

    @property
    def w1(self) -> np.ndarray:
        return self.w[:, : self.k]

    @property
    def w2(self) -> np.ndarray:
        return self.w[:, self.k :]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.base.eigenvalues

    @property
    def achieved_distance(self) -> float:
        return float(np.linalg.norm(self.base.w - self.w, 2))


def estimate_c(
    gf: GradientFunction,
    dist: Distribution,
    m_samples: int,
    rng: np.random.Generator,
    batch_size: int = 4096,
    threads: int = 1,
) -> np.ndarray:
    """Monte Carlo estimate (1/M) sum grad f(x_i) grad f(x_i)^T, x_i iid.

    Samples are drawn in fixed-size batches with per-batch child streams
    spawned from ``rng``; partial sums are reduced in batch order, so the
    result is reproducible for a given generator state and batch size
    regardless of thread count.
    """
    if m_samples < 1:
        raise ArgumentError("m_samples must be >= 1")
    if dist.dim != gf.dim:
        raise ArgumentError("distribution dimension does not match the function")
    sizes = [batch_size] * (m_samples // batch_size)
    if m_samples % batch_size:
        sizes.append(m_samples % batch_size)
    # One sub-seed per batch drawn up front; batch streams are then keyed,
    # so evaluation order and thread count cannot change the result.
    batch_seeds = rng.integers(0, 2**63 - 1, size=len(sizes))

    def batch_outer(idx: int) -> np.ndarray:
        x = dist.sample(sizes[idx], substream(int(batch_seeds[idx]), "estimate_c.batch", idx))
        g = gf.gradient(x)
        if not np.all(np.isfinite(g)):
            bad = int(np.argwhere(~np.isfinite(g))[0][0])
            raise NumericError(f"non-finite gradient at sample {bad} of batch {idx}")
        return g.T @ g

    partials = ordered_map(batch_outer, range(len(sizes)), threads=threads)
    c = sum(partials) / float(m_samples)
    return 0.5 * (c + c.T)


def exact_c_quadratic(a: np.ndarray) -> np.ndarray:
    """Exact gradient covariance A @ A for f(x) = x^T A x / 2 under N(0, I)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ArgumentError("A must be square")
    scale = float(np.abs(a).max())
    if scale > 0 and np.abs(a - a.T).max() > 1e-12 * scale:
        raise ArgumentError("A must be symmetric")
    return a @ a


def eigendecompose(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigendecomposition of a symmetric PSD matrix.

    Eigenvalues in [-1e-10, 0) are clamped to zero; more negative values
    are treated as a PSD violation.  Each eigenvector is normalized so its
    entry of largest magnitude is positive (ties to the lowest index), for
    deterministic output.
    """
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise NumericError("matrix has non-finite entries")
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ArgumentError("matrix must be square")
    scale = max(1.0, float(np.abs(c).max()))
    if np.abs(c - c.T).max() > 1e-10 * scale:
        raise ArgumentError("matrix is not symmetric within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (c + c.T))
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    if vals[-1] < -1e-10:
        raise NumericError(f"matrix is not PSD: smallest eigenvalue {vals[-1]:.3e}")
    np.clip(vals, 0.0, None, out=vals)
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, j] = -col
    return vals, vecs


def choose_k(
    eigenvalues: np.ndarray,
    strategy: str = "largest_gap",
    *,
    k: int | None = None,
    ratio: float | None = None,
) -> int:
    """Pick the split index from a descending spectrum.

    ``largest_gap`` maximizes lambda_i / lambda_{i+1} over i in [1, n-1]
    (denominator floored at 1e-30), ties to the smallest i.  ``manual``
    validates a caller-provided k.  ``threshold`` returns the smallest i
    whose gap ratio meets ``ratio``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[0]
    if n < 2:
        raise ArgumentError("need at least two eigenvalues")
    if np.any(np.diff(lam) > 0):
        raise ArgumentError("eigenvalues must be sorted descending")
    if strategy == "manual":
        if k is None or not (1 <= k <= n - 1):
            raise ArgumentError(f"manual k={k} out of range [1, {n - 1}]")
        return int(k)
    ratios = lam[:-1] / np.maximum(lam[1:], 1e-30)
    if strategy == "largest_gap":
        return int(np.argmax(ratios)) + 1
    if strategy == "threshold":
        if ratio is None or ratio <= 0:
            raise ArgumentError("threshold strategy needs a positive ratio")
        hits = np.nonzero(ratios >= ratio)[0]
        if hits.size == 0:
            raise ArgumentError(f"no spectral gap with ratio >= {ratio}")
        return int(hits[0]) + 1
    raise ArgumentError(f"unknown strategy {strategy!r}")


def split(w: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Column-block partition W = [W1 W2] at index k."""
    w = np.asarray(w, dtype=float)
    n = w.shape[1]
    if not (1 <= k <= n - 1):
        raise ArgumentError(f"split index k={k} out of range [1, {n - 1}]")
    return w[:, :k], w[:, k:]


def coords(subspace, x):
    """Active/inactive coordinates (y, z) = (W1^T x, W2^T x)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != subspace.n:
        raise ArgumentError(f"points must have dimension {subspace.n}")
    y = pts @ subspace.w1
    z = pts @ subspace.w2
    return (y[0], z[0]) if single else (y, z)


def reconstruct(subspace, y, z):
    """Inverse of :func:`coords`: x = W1 y + W2 z."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    zs = np.atleast_2d(z)
    if ys.shape[1] != subspace.k or zs.shape[1] != subspace.n - subspace.k:
        raise ArgumentError("coordinate dimensions do not match the split")
    x = ys @ subspace.w1.T + zs @ subspace.w2.T
    return x[0] if single else x


def _random_skew(n: int, rng: np.random.Generator) -> np.ndarray:
    s = rng.standard_normal((n, n))
    s = s - s.T
    return s / np.linalg.norm(s, 2)


def perturb(subspace: ActiveSubspace, epsilon: float, rng: np.random.Generator) -> PerturbedSubspace:
    """Random orthogonal frame W_hat with ||W - W_hat||_2 in [0.9 eps, eps].

    W_hat = W exp(t S) for a random unit-spectral-norm skew-symmetric S;
    the rotation magnitude t is found by bisection on the (monotone)
    distance map t -> ||I - exp(t S)||_2 = 2 sin(t/2).
    """
    if epsilon <= 0:
        raise ArgumentError("epsilon must be positive")
    if epsilon >= 2:
        raise ArgumentError("epsilon must be < 2 for orthogonal frames")
    s = _random_skew(subspace.n, rng)

    def distance(t: float) -> tuple[float, np.ndarray]:
        q = scipy.linalg.expm(t * s)
        w_hat = subspace.w @ q
        return float(np.linalg.norm(subspace.w - w_hat, 2)), w_hat

    lo, hi = 0.0, 2.0 * np.arcsin(min(epsilon, 1.999999) / 2.0)
    d_hi, w_hat = distance(hi)
    if d_hi < 0.9 * epsilon:  # expm drift; widen until inside the window
        while d_hi < 0.9 * epsilon and hi < np.pi:
            hi = min(np.pi, hi * 1.1)
            d_hi, w_hat = distance(hi)
    d, best = d_hi, w_hat
    for _ in range(80):
        if 0.9 * epsilon <= d <= epsilon:
            break
        mid = 0.5 * (lo + hi)
        d, best = distance(mid)
        if d > epsilon:
            hi = mid
        else:
            lo = mid
    else:
        raise NumericError("bisection failed to place ||W - W_hat|| inside [0.9 eps, eps]")
    return PerturbedSubspace(base=subspace, w=best, epsilon=epsilon)
