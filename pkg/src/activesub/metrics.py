"""MSE estimators between approximations, realization statistics, and bounds.

The mean squared error between two approximations of f is itself random
when one side is a Monte Carlo estimator; studies here estimate its mean,
standard deviation, and coefficient of variation over realizations, and
compare against the eigenvalue-based theoretical bounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Distribution
from .exceptions import ArgumentError, NumericError
from .ridge import Realization
from .rng import ordered_map, substream

__all__ = [
    "MseEstimate",
    "MseReport",
    "BoundInputs",
    "BoundVerdict",
    "mse",
    "expected_mse_study",
    "bound_expct_fg_f",
    "bound_var_mc",
    "bound_f_fghat",
    "bound_var_mc_pert",
    "bound_mse_f_fgN",
    "check_bound",
]


@dataclass(frozen=True)
class MseEstimate:
    """Monte Carlo estimate of E_X[(fa - fb)^2] with its standard error."""

    value: float
    stderr: float
    n_x: int
    realization: int | None = None

    def __post_init__(self):
        if self.value < 0 or self.stderr < 0:
            raise NumericError("MSE estimate and its standard error must be nonnegative")


@dataclass(frozen=True)
class MseReport:
    """Statistics of the random MSE over realizations at a fixed N."""

    n_mc: int
    realizations: int
    n_x: int
    mean: float
    std: float
    cv: float
    bound: float | None = None
    identity_prediction: float | None = None
    satisfied: bool | None = None

    @property
    def mean_stderr(self) -> float:
        return self.std / np.sqrt(self.realizations)


@dataclass(frozen=True)
class BoundInputs:
    """Everything the eigenvalue bounds consume.

    ``poincare`` is the Poincare constant of the conditional law,
    ``epsilon`` the subspace perturbation magnitude (0 when exact).
    """

    poincare: float
    eigenvalues: np.ndarray
    k: int
    n_mc: int
    epsilon: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if self.poincare < 0 or self.epsilon < 0:
            raise ArgumentError("constants must be nonnegative")
        if np.any(lam < 0):
            raise ArgumentError("eigenvalues must be nonnegative")
        if not (1 <= self.k <= lam.shape[0] - 1):
            raise ArgumentError("split index out of range")
        if self.n_mc < 1:
            raise ArgumentError("n_mc must be >= 1")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def active_sum(self) -> float:
        return float(self.eigenvalues[: self.k].sum())

    @property
    def inactive_sum(self) -> float:
        return float(self.eigenvalues[self.k :].sum())


def bound_expct_fg_f(b: BoundInputs) -> float:
    """Bound on E[(f - f_g)^2]: C * (lambda_{k+1} + ... + lambda_n)."""
    return b.poincare * b.inactive_sum


def bound_var_mc(b: BoundInputs) -> float:
    """Bound on E[MSE(f_g, f_gN)]: (C / N) * sum of inactive eigenvalues."""
    return b.poincare * b.inactive_sum / b.n_mc


def bound_f_fghat(b: BoundInputs) -> float:
    """Bound on E[(f - f_ghat)^2] under a perturbed frame.

    C * (eps * sqrt(active sum) + sqrt(inactive sum))^2.
    """
    mix = b.epsilon * np.sqrt(b.active_sum) + np.sqrt(b.inactive_sum)
    return b.poincare * mix * mix


def bound_var_mc_pert(b: BoundInputs) -> float:
    """Bound on E[MSE(f_ghat, f_ghatN)]: the perturbed bound divided by N."""
    return bound_f_fghat(b) / b.n_mc


def bound_mse_f_fgN(b: BoundInputs) -> float:
    """Bound on E[MSE(f, f_ghatN)]: C (1 + N^{-1/2})^2 (eps sqrt(act) + sqrt(inact))^2."""
    factor = (1.0 + b.n_mc ** (-0.5)) ** 2
    return factor * bound_f_fghat(b)


@dataclass(frozen=True)
class BoundVerdict:
    """Outcome of comparing an MC estimate against a theoretical bound.

    Satisfied means the estimate minus three standard errors does not
    exceed the bound; slack is bound minus estimate.
    """

    satisfied: bool
    slack: float
    estimate: float
    stderr: float
    bound: float


def check_bound(estimate: float, stderr: float, bound: float) -> BoundVerdict:
    ok = estimate - 3.0 * stderr <= bound
    return BoundVerdict(
        satisfied=bool(ok),
        slack=float(bound - estimate),
        estimate=float(estimate),
        stderr=float(stderr),
        bound=float(bound),
    )


def mse(fa, fb, dist: Distribution, n_x: int, rng: np.random.Generator, realization: int | None = None) -> MseEstimate:
    """MC estimate of E_X[(fa(X) - fb(X))^2] over n_x fresh draws.

    ``fa`` and ``fb`` take a batch (n_x, n) and return (n_x,) values;
    bind any realization into fb before calling.
    """
    if n_x < 2:
        raise ArgumentError("n_x must be >= 2")
    x = dist.sample(n_x, rng)
    va = np.asarray(fa(x), dtype=float)
    vb = np.asarray(fb(x), dtype=float)
    sq = (va - vb) ** 2
    if not np.all(np.isfinite(sq)):
        bad = int(np.argwhere(~np.isfinite(sq))[0][0])
        raise NumericError(f"non-finite evaluation at sample index {bad}")
    value = float(sq.mean())
    stderr = float(sq.std(ddof=1) / np.sqrt(n_x))
    return MseEstimate(value=value, stderr=stderr, n_x=n_x, realization=realization)


def expected_mse_study(
    fa,
    fb_family,
    dist: Distribution,
    n_x: int,
    realizations: int,
    seed: int,
    *,
    n_mc: int = 0,
    bound: float | None = None,
    identity_prediction: float | None = None,
    share_x_batch: bool = False,
    threads: int = 1,
) -> MseReport:
    """Mean/std/CV of the random MSE over independent realizations.

    ``fb_family(realization)`` returns the batch evaluator for one
    realization.  Each realization draws a fresh X batch from a keyed
    substream (or a shared batch when ``share_x_batch``), so the study is
    deterministic for a given seed regardless of thread count.
    """
    if realizations < 2:
        raise ArgumentError("need at least two realizations")

    def one(r: int) -> float:
        x_key = 0 if share_x_batch else r
        rng = substream(seed, "mse.x", x_key)
        est = mse(fa, fb_family(Realization(index=r, seed=seed)), dist, n_x, rng, realization=r)
        return est.value

    values = np.array(ordered_map(one, range(realizations), threads=threads))
    mean = float(values.mean())
    std = float(values.std(ddof=1))
    cv = std / mean if mean > 0 else 0.0
    satisfied = None
    if bound is not None:
        satisfied = check_bound(mean, std / np.sqrt(realizations), bound).satisfied
    return MseReport(
        n_mc=n_mc,
        realizations=realizations,
        n_x=n_x,
        mean=mean,
        std=std,
        cv=cv,
        bound=bound,
        identity_prediction=identity_prediction,
        satisfied=satisfied,
    )
