"""Benchmark problems with analytically known active subspaces.

The quadratic benchmark is f(x) = x^T A x / 2 under a standard normal
density, with A = W Lambda^{1/2} W^T built from a chosen spectrum and a
seeded random orthogonal frame.  Its gradient covariance is exactly
C = A^2 = W Lambda W^T, so the true eigenpairs are known and every
downstream estimate can be checked against closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import StandardNormal
from .exceptions import ArgumentError
from .rng import substream
from .subspace import ActiveSubspace, GradientFunction, QuadraticForm

__all__ = [
    "DEFAULT_SPECTRUM_EXPONENTS",
    "random_orthogonal",
    "QuadraticProblem",
    "quadratic_gaussian_problem",
    "exact_conditional_mse",
]

# Default benchmark spectrum: a gap of almost two orders of magnitude
# after the second eigenvalue, then a smooth geometric tail.
DEFAULT_SPECTRUM_EXPONENTS = (4.0, 3.8, 2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25)


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Orthogonal factor of a seeded Gaussian matrix, sign-normalized.

    Columns are flipped so the entry of largest magnitude is positive,
    matching the eigendecomposition convention, which makes the frame a
    fixed function of (n, seed).
    """
    gen = substream(seed, "problems.orthogonal", n)
    q, r = np.linalg.qr(gen.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))  # make the QR factor unique
    for j in range(n):
        col = q[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            q[:, j] = -col
    return q


@dataclass(frozen=True)
class QuadraticProblem:
    """Quadratic benchmark bundle: function, ground-truth subspace, density."""

    gf: GradientFunction
    subspace: ActiveSubspace
    dist: StandardNormal
    spectrum: np.ndarray

    @property
    def inactive_sum(self) -> float:
        return self.subspace.inactive_sum

    @property
    def active_sum(self) -> float:
        return self.subspace.active_sum

    @property
    def expected_mse_fg_f(self) -> float:
        """Exact E[(f - f_g)^2] = sum of inactive eigenvalues / 2."""
        return 0.5 * self.inactive_sum

    def gn_variance(self, n_mc: int) -> float:
        """Exact Var[g_N(y)], independent of y: inactive sum / (2 N)."""
        return 0.5 * self.inactive_sum / n_mc


def exact_conditional_mse(quad: QuadraticForm, subspace) -> float:
    """Exact E[(f - f_g)^2] for a quadratic f under N(0, I).

    With the split blocks B_c = W1^T H W2, B_2 = W2^T H W2, b_2 = W2^T b,
    the conditional residual f - g(y) has mean-square
    ||B_c||_F^2 + ||b_2||^2 + ||B_2||_F^2 / 2, valid for any orthogonal
    frame (exact or perturbed).
    """
    w1, w2 = subspace.w1, subspace.w2
    b_cross = w1.T @ quad.h @ w2
    b_inact = w2.T @ quad.h @ w2
    lin = w2.T @ quad.b
    return float(
        np.sum(b_cross * b_cross) + lin @ lin + 0.5 * np.sum(b_inact * b_inact)
    )


def quadratic_gaussian_problem(
    n: int = 10,
    k: int = 2,
    spectrum_exponents=None,
    w_seed: int = 0,
) -> QuadraticProblem:
    """Build the quadratic benchmark with known eigenstructure.

    ``spectrum_exponents`` are base-10 exponents of the eigenvalues of the
    gradient covariance (descending); A = W Lambda^{1/2} W^T so that
    C = A^2 has exactly those eigenvalues in the frame W.
    """
    if spectrum_exponents is None:
        spectrum_exponents = DEFAULT_SPECTRUM_EXPONENTS
    exps = np.asarray(spectrum_exponents, dtype=float)
    if exps.shape != (n,):
        raise ArgumentError(f"need {n} spectrum exponents, got {exps.shape}")
    if np.any(np.diff(exps) > 0):
        raise ArgumentError("spectrum exponents must be descending")
    if not (1 <= k <= n - 1):
        raise ArgumentError(f"split index k={k} out of range [1, {n - 1}]")
    lam = 10.0**exps
    w = random_orthogonal(n, w_seed)
    a = (w * np.sqrt(lam)) @ w.T
    a = 0.5 * (a + a.T)
    quad = QuadraticForm(h=a, b=np.zeros(n), c=0.0)
    gf = GradientFunction.from_quadratic(quad)
    c_exact = (w * lam) @ w.T
    c_exact = 0.5 * (c_exact + c_exact.T)
    subspace = ActiveSubspace(eigenvalues=lam, w=w, k=k, c_hat=c_exact)
    return QuadraticProblem(gf=gf, subspace=subspace, dist=StandardNormal(n), spectrum=lam)
