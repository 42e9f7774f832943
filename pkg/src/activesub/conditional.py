"""Samplers for the inactive variable conditioned on the active one.

Given a subspace split x = W1 y + W2 z, the conditional law of z given y
is what the ridge approximation integrates over.  For the standard normal
it is again standard normal, independent of y.  For a uniform density on
a convex body it is uniform on the slice {z : W1 y + W2 z in body};
rejection sampling from a bounding box of the slice is exact, with
hit-and-run as a fallback for pathologically thin slices.
"""
from __future__ import annotations

import numpy as np
import scipy.optimize

from .distributions import Distribution, StandardNormal, UniformBall, UniformBox
from .exceptions import ArgumentError, DomainError, NumericError

__all__ = ["ConditionalSampler"]

ANALYTIC_GAUSSIAN = "analytic_gaussian"
REJECTION_SLICE = "rejection_slice"
HIT_AND_RUN_SLICE = "hit_and_run_slice"

_PROBE_DRAWS = 1000
_PROBE_MIN_RATE = 0.01
_MAX_CANDIDATES = 2_000_000


class ConditionalSampler:
    """Draws z ~ rho(z | y) for a distribution and a subspace split.

    The subspace object must expose ``n``, ``k``, ``w1`` and ``w2``; both
    exact and perturbed subspaces qualify.  A degenerate split with k = n
    is accepted and yields empty vectors.
    """

    def __init__(self, dist: Distribution, subspace, method: str | None = None):
        if subspace.n != dist.dim:
            raise ArgumentError("subspace and distribution dimensions differ")
        self.dist = dist
        self.subspace = subspace
        gaussian = isinstance(dist, StandardNormal)
        if method is None:
            method = ANALYTIC_GAUSSIAN if gaussian else REJECTION_SLICE
        if gaussian and method != ANALYTIC_GAUSSIAN:
            raise ArgumentError("standard normal conditionals are analytic; use analytic_gaussian")
        if not gaussian and method == ANALYTIC_GAUSSIAN:
            raise ArgumentError("analytic_gaussian applies only to the standard normal")
        if method not in (ANALYTIC_GAUSSIAN, REJECTION_SLICE, HIT_AND_RUN_SLICE):
            raise ArgumentError(f"unknown sampler method {method!r}")
        self.method = method
        if not gaussian:
            # Bounding box of the projected support, independent of y.
            self._z_lo, self._z_hi = self._inactive_bounds()

    @property
    def inactive_dim(self) -> int:
        return self.subspace.n - self.subspace.k

    def _inactive_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        w2 = self.subspace.w2
        if isinstance(self.dist, UniformBox):
            lo_hi = np.stack([w2.T * self.dist.lo, w2.T * self.dist.hi])
            return lo_hi.min(axis=0).sum(axis=1), lo_hi.max(axis=0).sum(axis=1)
        if isinstance(self.dist, UniformBall):
            center = w2.T @ self.dist.center
            return center - self.dist.radius, center + self.dist.radius
        raise NotImplementedError(f"unsupported distribution {type(self.dist).__name__}")

    def _check_y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.subspace.k,):
            raise ArgumentError(f"y must have shape ({self.subspace.k},)")
        return y

    def sample(self, y, count: int, rng: np.random.Generator) -> np.ndarray:
        """``count`` i.i.d. draws from the conditional law given y.

        Draws consume ``rng`` sequentially, so the first rows of a larger
        request coincide with a smaller request from the same stream.
        """
        if count < 1:
            raise ArgumentError("count must be >= 1")
        y = self._check_y(y)
        if self.inactive_dim == 0:
            return np.empty((count, 0))
        if self.method == ANALYTIC_GAUSSIAN:
            return rng.standard_normal((count, self.inactive_dim))
        base = self.subspace.w1 @ y
        if self.method == HIT_AND_RUN_SLICE:
            start = self._feasible_point(base)
            return self._hit_and_run(base, start, count, rng)
        return self._rejection(base, count, rng)

    # -- uniform-body machinery -------------------------------------------

    def _rejection(self, base, count, rng) -> np.ndarray:
        m = self.inactive_dim
        w2t = self.subspace.w2.T
        out = np.empty((count, m))
        got = 0
        attempted = 0
        accepted = 0
        chunk = max(count, 256)
        while got < count:
            cand = rng.uniform(self._z_lo, self._z_hi, size=(chunk, m))
            keep = self.dist._contains_batch(base + cand @ w2t)
            attempted += chunk
            accepted += int(keep.sum())
            take = min(count - got, int(keep.sum()))
            if take:
                out[got : got + take] = cand[keep][:take]
                got += take
            if got < count and attempted >= _PROBE_DRAWS and accepted / attempted < _PROBE_MIN_RATE:
                # Slice too thin for rejection; hand the remainder to hit-and-run.
                start = out[got - 1] if got else self._feasible_point(base)
                out[got:] = self._hit_and_run(base, start, count - got, rng)
                return out
            if attempted > _MAX_CANDIDATES and accepted == 0:
                raise DomainError("no feasible inactive point found; y appears to lie outside Y")
        return out

    def slice_is_empty(self, y) -> bool:
        """Whether the inactive slice at y has no interior point."""
        y = self._check_y(y)
        if isinstance(self.dist, StandardNormal) or self.inactive_dim == 0:
            return False
        base = self.subspace.w1 @ y
        try:
            self._feasible_point(base)
        except DomainError:
            return True
        return False

    def _feasible_point(self, base) -> np.ndarray:
        """Interior point of the slice, or DomainError when empty."""
        m = self.inactive_dim
        w2 = self.subspace.w2
        if isinstance(self.dist, UniformBall):
            center = w2.T @ (self.dist.center - base)
            r2 = self.dist.radius**2 - float(
                np.sum((base + w2 @ center - self.dist.center) ** 2)
            )
            if r2 <= 0:
                raise DomainError("empty inactive slice: y outside the projected support")
            return center
        # Box: Chebyshev center of {z : lo <= base + W2 z <= hi} via an LP
        # in (z, t): maximize t s.t. base + W2 z >= lo + t, <= hi - t.
        a_ub = np.vstack([np.hstack([-w2, np.ones((w2.shape[0], 1))]),
                          np.hstack([w2, np.ones((w2.shape[0], 1))])])
        b_ub = np.concatenate([base - self.dist.lo, self.dist.hi - base])
        cvec = np.zeros(m + 1)
        cvec[-1] = -1.0
        res = scipy.optimize.linprog(
            cvec, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * m + [(0, None)],
            method="highs",
        )
        if not res.success or res.x[-1] <= 0:
            raise DomainError("empty inactive slice: y outside the projected support")
        return res.x[:m]

    def _chord(self, x, direction):
        """Interval of t with x + t*direction inside the body."""
        if isinstance(self.dist, UniformBox):
            lo_t, hi_t = -np.inf, np.inf
            for a, b, lo, hi in zip(x, direction, self.dist.lo, self.dist.hi):
                if abs(b) < 1e-300:
                    if not (lo <= a <= hi):
                        return 0.0, 0.0
                    continue
                t0, t1 = (lo - a) / b, (hi - a) / b
                lo_t = max(lo_t, min(t0, t1))
                hi_t = min(hi_t, max(t0, t1))
            return lo_t, hi_t
        # Ball: |x + t d - c|^2 = r^2 is quadratic in t.
        dx = x - self.dist.center
        aa = float(direction @ direction)
        bb = 2.0 * float(dx @ direction)
        cc = float(dx @ dx) - self.dist.radius**2
        disc = bb * bb - 4.0 * aa * cc
        if disc <= 0:
            return 0.0, 0.0
        root = np.sqrt(disc)
        return (-bb - root) / (2.0 * aa), (-bb + root) / (2.0 * aa)

    def _hit_and_run(self, base, start, count, rng) -> np.ndarray:
        """Uniform sampling on the slice by hit-and-run (approximate).

        Thinned by a few times the slice dimension per emitted sample;
        used only as a fallback, so throughput is secondary.
        """
        m = self.inactive_dim
        w2 = self.subspace.w2
        thin = 4 * m + 8
        z = np.array(start, dtype=float)
        out = np.empty((count, m))
        for i in range(count):
            for _ in range(thin):
                d = rng.standard_normal(m)
                d /= np.linalg.norm(d)
                t_lo, t_hi = self._chord(base + w2 @ z, w2 @ d)
                if t_hi <= t_lo:
                    continue
                z = z + rng.uniform(t_lo, t_hi) * d
            out[i] = z
        x = base + out @ w2.T
        if not np.all(self.dist._contains_batch(x)):
            raise NumericError("hit-and-run produced a point outside the support")
        return out
