"""Conditional-expectation ridge approximations and their MC estimators.

For a function f and a subspace split x = W1 y + W2 z, the best
mean-square approximation of f that depends on y alone is the conditional
expectation g(y) = E[f(W1 y + W2 Z) | Y = y].  In practice g is replaced
by an N-sample Monte Carlo average g_N(y), which is a *random* function:
one realization index identifies one draw of all its conditional samples.

Randomness contract: the conditional draws behind g_N are keyed by
(seed, realization index, exact bit pattern of y), so repeated evaluation
at the same y inside one realization is consistent, distinct y values get
independent draws, and results do not depend on evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditional import ConditionalSampler
from .distributions import StandardNormal
from .exceptions import ArgumentError
from .rng import KeyedStreamFamily, scratch_substream, substream

__all__ = ["Realization", "ClosedForm", "HighAccuracyMC", "RidgeApprox"]

_GN_TAG = "ridge.gN"
_GREF_TAG = "ridge.g_ref"


@dataclass(frozen=True)
class Realization:
    """One draw of all conditional samples inside g_N.

    The pair (seed, index) fully determines every conditional draw, so a
    realization can be replayed at any query point at any time.
    """

    index: int
    seed: int

    def __post_init__(self):
        if self.index < 0:
            raise ArgumentError("realization index must be nonnegative")


@dataclass(frozen=True)
class ClosedForm:
    """Reference g via the exact conditional expectation of a quadratic.

    Valid for quadratic functions under the standard normal: the
    conditional law of z given y is again standard normal, so
    E[f(W1 y + W2 z)] = f(W1 y) + tr(W2^T H W2) / 2.
    """


@dataclass(frozen=True)
class HighAccuracyMC:
    """Reference g via a large Monte Carlo average on a dedicated stream."""

    n_ref: int = 10**6
    seed: int = 0x9E3779B9


class RidgeApprox:
    """Bundles f, a subspace, a conditional sampler, and a sample count.

    Evaluates the reference approximation g, its N-sample estimator g_N,
    and the lifted functions f_g(x) = g(W1^T x) and f_gN(x) = g_N(W1^T x).
    Works identically for exact and perturbed subspaces; the frame is
    whatever the supplied subspace exposes as w1/w2.
    """

    def __init__(self, gf, subspace, sampler: ConditionalSampler, n_mc: int, reference=None):
        if n_mc < 1:
            raise ArgumentError("n_mc must be >= 1")
        if sampler.subspace is not subspace:
            raise ArgumentError("sampler must be built on the same subspace object")
        if gf.dim != subspace.n:
            raise ArgumentError("function and subspace dimensions differ")
        self.gf = gf
        self.subspace = subspace
        self.sampler = sampler
        self.n_mc = int(n_mc)
        closed_form_ok = gf.quadratic is not None and isinstance(sampler.dist, StandardNormal)
        if reference is None:
            reference = ClosedForm() if closed_form_ok else HighAccuracyMC()
        if isinstance(reference, ClosedForm) and not closed_form_ok:
            raise ArgumentError(
                "closed-form reference needs a quadratic function and a standard normal density"
            )
        self.reference = reference
        if isinstance(reference, ClosedForm):
            q = gf.quadratic
            w1, w2 = subspace.w1, subspace.w2
            self._h_y = w1.T @ q.h @ w1
            self._b_y = w1.T @ q.b
            self._c_y = q.c + 0.5 * float(np.trace(w2.T @ q.h @ w2))

    # -- reference approximation ------------------------------------------

    def g(self, y, with_stderr: bool = False):
        """Reference g at y (closed form, or high-accuracy MC with stderr)."""
        ys, single = self._as_y(y)
        if isinstance(self.reference, ClosedForm):
            vals = (
                0.5 * np.einsum("ij,ij->i", ys @ self._h_y, ys)
                + ys @ self._b_y
                + self._c_y
            )
            ses = np.zeros_like(vals)
        else:
            vals = np.empty(ys.shape[0])
            ses = np.empty(ys.shape[0])
            for i, yi in enumerate(ys):
                vals[i], ses[i] = self._g_reference_mc(yi)
        if single:
            return (float(vals[0]), float(ses[0])) if with_stderr else float(vals[0])
        return (vals, ses) if with_stderr else vals

    def _g_reference_mc(self, y) -> tuple[float, float]:
        ref: HighAccuracyMC = self.reference
        gen = substream(ref.seed, _GREF_TAG, self._y_bytes(y))
        base = self.subspace.w1 @ y
        w2t = self.subspace.w2.T
        total = 0.0
        total_sq = 0.0
        left = ref.n_ref
        chunk = 200_000
        while left > 0:
            take = min(chunk, left)
            z = self.sampler.sample(y, take, gen)
            vals = self.gf.f(base + z @ w2t)
            total += float(vals.sum())
            total_sq += float((vals * vals).sum())
            left -= take
        mean = total / ref.n_ref
        var = max(total_sq / ref.n_ref - mean * mean, 0.0)
        return mean, float(np.sqrt(var / ref.n_ref))

    # -- Monte Carlo estimator --------------------------------------------

    def g_n(self, y, realization: Realization) -> float:
        """N-sample MC estimate of g(y) under the given realization."""
        return float(self.g_n_profile(y, [self.n_mc], realization)[0])

    def g_n_profile(self, y, n_list, realization: Realization) -> np.ndarray:
        """g_N(y) for several N at once, sharing one conditional stream.

        The draws for each N are the first N outputs of the keyed stream,
        so entry j equals ``g_n`` of a RidgeApprox with n_mc = n_list[j].
        """
        y = np.ascontiguousarray(y, dtype=float)
        if y.shape != (self.subspace.k,):
            raise ArgumentError(f"y must have shape ({self.subspace.k},)")
        n_arr = self._check_n_list(n_list)
        gen = scratch_substream(realization.seed, _GN_TAG, realization.index, y.tobytes())
        z = self.sampler.sample(y, int(n_arr.max()), gen)
        vals = self.gf.f(self.subspace.w1 @ y + z @ self.subspace.w2.T)
        csum = np.cumsum(vals)
        return csum[n_arr - 1] / n_arr

    def g_n_profile_batch(self, ys, n_list, realization: Realization, block: int = 512) -> np.ndarray:
        """g_N over a batch of y rows for several N; shape (len(ys), len(n_list)).

        Matches :meth:`g_n_profile` row by row up to floating-point
        association in the batched function evaluation.
        """
        ys = np.ascontiguousarray(ys, dtype=float)
        if ys.ndim != 2 or ys.shape[1] != self.subspace.k:
            raise ArgumentError(f"ys must have shape (m, {self.subspace.k})")
        n_arr = self._check_n_list(n_list)
        n_max = int(n_arr.max())
        m_dim = self.subspace.n - self.subspace.k
        w1t = self.subspace.w1.T
        w2t = self.subspace.w2.T
        out = np.empty((ys.shape[0], n_arr.shape[0]))
        zbuf = np.empty((block, n_max, m_dim))
        pts_buf = np.empty((block, n_max, self.subspace.n))
        family = KeyedStreamFamily(realization.seed, _GN_TAG, realization.index)
        gaussian = isinstance(self.sampler.dist, StandardNormal)
        row_nbytes = self.subspace.k * 8
        for start in range(0, ys.shape[0], block):
            rows = ys[start : start + block]
            b = rows.shape[0]
            raw = rows.tobytes()
            for i in range(b):
                gen = family.scratch(raw[i * row_nbytes : (i + 1) * row_nbytes])
                if gaussian:
                    gen.standard_normal(out=zbuf[i])
                else:
                    zbuf[i] = self.sampler.sample(rows[i], n_max, gen)
            pts = pts_buf[:b]
            np.matmul(zbuf[:b], w2t, out=pts)
            pts += (rows @ w1t)[:, None, :]  # add base points W1 y
            vals = self.gf.f(pts.reshape(b * n_max, -1)).reshape(b, n_max)
            csum = np.cumsum(vals, axis=1)
            out[start : start + b] = csum[:, n_arr - 1] / n_arr
        return out

    # -- lifted functions ---------------------------------------------------

    def f_g(self, x, with_stderr: bool = False):
        """f_g(x) = g(W1^T x); constant along the inactive directions."""
        pts, single = self._as_x(x)
        res = self.g(pts @ self.subspace.w1, with_stderr=with_stderr)
        if single:
            if with_stderr:
                return float(res[0][0]), float(res[1][0])
            return float(res[0])
        return res

    def f_gn(self, x, realization: Realization) -> float:
        pts, single = self._as_x(x)
        if not single:
            raise ArgumentError("f_gn takes a single point; use f_gn_batch for batches")
        return self.g_n(pts[0] @ self.subspace.w1, realization)

    def f_gn_batch(self, x, realization: Realization) -> np.ndarray:
        pts, _ = self._as_x(np.atleast_2d(x))
        return self.g_n_profile_batch(pts @ self.subspace.w1, [self.n_mc], realization)[:, 0]

    # -- helpers ------------------------------------------------------------

    def _check_n_list(self, n_list) -> np.ndarray:
        n_arr = np.asarray(n_list, dtype=int)
        if n_arr.ndim != 1 or n_arr.size == 0 or np.any(n_arr < 1):
            raise ArgumentError("n_list must be a nonempty list of positive integers")
        if np.any(np.diff(n_arr) <= 0):
            raise ArgumentError("n_list must be strictly increasing")
        return n_arr

    def _y_bytes(self, y) -> bytes:
        return np.ascontiguousarray(y, dtype=float).tobytes()

    def _as_y(self, y) -> tuple[np.ndarray, bool]:
        arr = np.asarray(y, dtype=float)
        if arr.ndim == 1:
            if arr.shape[0] != self.subspace.k:
                raise ArgumentError(f"y must have dimension {self.subspace.k}")
            return arr[None, :], True
        if arr.ndim != 2 or arr.shape[1] != self.subspace.k:
            raise ArgumentError(f"y batch must have shape (m, {self.subspace.k})")
        return arr, False

    def _as_x(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            if arr.shape[0] != self.subspace.n:
                raise ArgumentError(f"x must have dimension {self.subspace.n}")
            return arr[None, :], True
        if arr.ndim != 2 or arr.shape[1] != self.subspace.n:
            raise ArgumentError(f"x batch must have shape (m, {self.subspace.n})")
        return arr, False
