"""Bayesian inversion in the active subspace.

The data misfit of a forward model under Gaussian noise plays the role of
the function being approximated; its ridge approximations induce
approximate posteriors.  This module evaluates exact and approximate
unnormalized posteriors, normalizing constants, Hellinger distances
between them (grid quadrature or prior Monte Carlo), the eigenvalue-based
Hellinger bounds, and a random-walk Metropolis sampler in the active
variable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .conditional import ConditionalSampler
from .distributions import Distribution, StandardNormal
from .exceptions import ArgumentError, DomainError, NumericError
from .ridge import Realization, RidgeApprox
from .subspace import GradientFunction, QuadraticForm

__all__ = [
    "LinearForward",
    "PosteriorSpec",
    "PosteriorVariant",
    "posterior_variant",
    "unnormalized_posterior",
    "normalizing_constant",
    "DensityWithZ",
    "GridQuadrature",
    "PriorMonteCarlo",
    "hellinger",
    "HellingerBoundInputs",
    "hellinger_bound_gpert",
    "hellinger_bound_gpert_gpertN",
    "hellinger_bound_total",
    "estimate_L",
    "ActiveTarget",
    "McmcResult",
    "metropolis_hastings_active",
    "integrated_autocorr",
]


@dataclass(frozen=True)
class LinearForward:
    """Linear forward model G(x) = G x with a constant Jacobian."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ArgumentError("forward matrix must be 2-D")
        object.__setattr__(self, "matrix", m)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.matrix.T

    @property
    def n_data(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


class PosteriorSpec:
    """Prior, forward model, data, and noise covariance.

    The misfit is half the squared noise-weighted residual; with Gaussian
    noise the likelihood is proportional to exp(-misfit), so the
    unnormalized posterior is exp(-misfit) times the prior density.
    """

    def __init__(self, prior: Distribution, forward, data, noise_cov):
        self.prior = prior
        self.forward = forward
        self.data = np.asarray(data, dtype=float)
        gamma = np.asarray(noise_cov, dtype=float)
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
            raise ArgumentError("noise covariance must be square")
        if self.data.shape != (gamma.shape[0],):
            raise ArgumentError("data and noise covariance dimensions differ")
        try:
            self._chol = scipy.linalg.cholesky(gamma, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ArgumentError("noise covariance must be symmetric positive definite") from exc
        self.noise_cov = gamma
        if isinstance(forward, LinearForward) and forward.dim != prior.dim:
            raise ArgumentError("forward model and prior dimensions differ")

    def misfit(self, x) -> np.ndarray:
        """Data misfit 0.5 * ||Gamma^{-1/2} (d - G(x))||^2, batched."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        resid = self.data - np.asarray(self.forward(pts), dtype=float)
        white = scipy.linalg.solve_triangular(self._chol, resid.T, lower=True)
        vals = 0.5 * np.einsum("ij,ij->j", white, white)
        return vals if np.asarray(x).ndim == 2 else float(vals[0])

    def misfit_gradient_function(self, jacobian: Callable | None = None) -> GradientFunction:
        """The misfit as a GradientFunction, for subspace estimation.

        Linear forward models yield an exact quadratic tag
        (H = G^T Gamma^{-1} G, b = -G^T Gamma^{-1} d); general models need
        a Jacobian callable (m, n) -> (m, n_data, n).
        """
        if isinstance(self.forward, LinearForward):
            g = self.forward.matrix
            gamma_inv_g = scipy.linalg.cho_solve((self._chol, True), g)
            h = g.T @ gamma_inv_g
            h = 0.5 * (h + h.T)
            gamma_inv_d = scipy.linalg.cho_solve((self._chol, True), self.data)
            b = -g.T @ gamma_inv_d
            c = 0.5 * float(self.data @ gamma_inv_d)
            return GradientFunction.from_quadratic(QuadraticForm(h=h, b=b, c=c))
        if jacobian is None:
            raise ArgumentError("nonlinear forward models need a jacobian callable")

        def grad(x):
            pts = np.atleast_2d(x)
            resid = self.data - np.asarray(self.forward(pts), dtype=float)
            weighted = scipy.linalg.cho_solve((self._chol, True), resid.T).T
            jac = np.asarray(jacobian(pts), dtype=float)
            return -np.einsum("mdn,md->mn", jac, weighted)

        return GradientFunction(dim=self.prior.dim, f=self.misfit, grad=grad)


@dataclass(frozen=True)
class PosteriorVariant:
    """One member of the posterior family: exact, ridge, or MC-ridge.

    ``misfit`` takes a batch; MC-ridge variants additionally need a
    realization.  ``z`` carries the latest normalizing-constant estimate
    when one has been attached.
    """

    kind: str  # "exact" | "ridge" | "ridge_mc"
    spec: PosteriorSpec
    misfit: Callable
    random: bool
    perturbed: bool = False
    z: float | None = None
    z_se: float = 0.0

    @property
    def label(self) -> str:
        if self.kind == "exact":
            return "exact"
        suffix = "_mc" if self.random else ""
        return ("ridge_pert" if self.perturbed else "ridge") + suffix

    def with_z(self, z: float, z_se: float = 0.0) -> "PosteriorVariant":
        return PosteriorVariant(
            kind=self.kind, spec=self.spec, misfit=self.misfit,
            random=self.random, perturbed=self.perturbed, z=z, z_se=z_se,
        )


def posterior_variant(spec: PosteriorSpec, kind: str, ridge: RidgeApprox | None = None) -> PosteriorVariant:
    """Build a posterior variant; ridge kinds take the misfit's RidgeApprox."""
    if kind == "exact":
        return PosteriorVariant(kind=kind, spec=spec, misfit=spec.misfit, random=False)
    if ridge is None:
        raise ArgumentError(f"variant {kind!r} needs a ridge approximation")
    perturbed = hasattr(ridge.subspace, "base")
    if kind == "ridge":
        def misfit(x):
            return ridge.f_g(np.atleast_2d(x))
        return PosteriorVariant(kind=kind, spec=spec, misfit=misfit, random=False, perturbed=perturbed)
    if kind == "ridge_mc":
        def misfit_mc(x, realization: Realization):
            return ridge.f_gn_batch(np.atleast_2d(x), realization)
        return PosteriorVariant(kind=kind, spec=spec, misfit=misfit_mc, random=True, perturbed=perturbed)
    raise ArgumentError(f"unknown posterior variant kind {kind!r}")


def unnormalized_posterior(pv: PosteriorVariant, x, realization: Realization | None = None):
    """exp(-misfit(x)) * prior density; realization required for MC variants."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pv.random:
        if realization is None:
            raise ArgumentError("random posterior variants need a realization")
        m = pv.misfit(pts, realization)
    else:
        m = pv.misfit(pts)
    vals = np.exp(-np.asarray(m, dtype=float)) * pv.spec.prior.density(pts)
    return vals if np.asarray(x).ndim == 2 else float(vals[0])


def normalizing_constant(
    pv: PosteriorVariant,
    dist: Distribution,
    m_samples: int,
    rng: np.random.Generator,
    realization: Realization | None = None,
) -> tuple[float, float]:
    """Prior-MC estimate of Z = E_prior[exp(-misfit)] with standard error."""
    if m_samples < 2:
        raise ArgumentError("m_samples must be >= 2")
    x = dist.sample(m_samples, rng)
    if pv.random:
        if realization is None:
            raise ArgumentError("random posterior variants need a realization")
        vals = np.exp(-np.asarray(pv.misfit(x, realization), dtype=float))
    else:
        vals = np.exp(-np.asarray(pv.misfit(x), dtype=float))
    z = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(m_samples))
    return z, se


# -- Hellinger distance ----------------------------------------------------


@dataclass(frozen=True)
class DensityWithZ:
    """Unnormalized density exp(-misfit) * prior with its Z estimate."""

    prior: Distribution
    misfit: Callable  # batch (m, n) -> (m,)
    z: float
    z_se: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.z) or self.z <= 0:
            raise NumericError(f"normalizing constant must be positive, got {self.z}")


@dataclass(frozen=True)
class GridQuadrature:
    """Tensor trapezoid grid on [lo, hi]^n, for n <= 3.

    The bounds must cover essentially all of both masses; tails beyond
    the box are silently dropped.
    """

    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ArgumentError("grid needs at least 2 points per dimension")
        if not self.hi > self.lo:
            raise ArgumentError("grid bounds must satisfy hi > lo")

    def nodes_and_weights(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        if dim > 3:
            raise ArgumentError("grid quadrature supports dimension <= 3")
        axis = np.linspace(self.lo, self.hi, self.points)
        h = axis[1] - axis[0]
        w1 = np.full(self.points, h)
        w1[0] = w1[-1] = h / 2.0
        grids = np.meshgrid(*([axis] * dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.ones(pts.shape[0])
        for d in range(dim):
            idx = np.unravel_index(np.arange(pts.shape[0]), (self.points,) * dim)[d]
            weights *= w1[idx]
        return pts, weights


@dataclass(frozen=True)
class PriorMonteCarlo:
    """Estimate the Hellinger integral as a prior expectation."""

    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise ArgumentError("need at least 2 samples")


def hellinger(p: DensityWithZ, q: DensityWithZ, integration, rng: np.random.Generator | None = None) -> float:
    """Hellinger distance between the normalized versions of p and q.

    Grid mode integrates (sqrt(p/Zp) - sqrt(q/Zq))^2 / 2 on a tensor grid;
    prior-MC mode uses 1 - E_prior[exp(-(fp + fq)/2)] / sqrt(Zp Zq).
    The result is clamped to [0, 1] against quadrature round-off.
    """
    if isinstance(integration, GridQuadrature):
        dim = p.prior.dim
        if q.prior.dim != dim:
            raise ArgumentError("densities live on different dimensions")
        pts, wts = integration.nodes_and_weights(dim)
        pv = np.exp(-np.asarray(p.misfit(pts), dtype=float)) * p.prior.density(pts) / p.z
        qv = np.exp(-np.asarray(q.misfit(pts), dtype=float)) * q.prior.density(pts) / q.z
        d2 = 0.5 * float(wts @ (np.sqrt(pv) - np.sqrt(qv)) ** 2)
        return float(np.sqrt(np.clip(d2, 0.0, 1.0)))
    if isinstance(integration, PriorMonteCarlo):
        if rng is None:
            raise ArgumentError("prior-MC integration needs a generator")
        if type(p.prior) is not type(q.prior) or p.prior.dim != q.prior.dim:
            raise ArgumentError("prior-MC integration needs a common prior")
        x = p.prior.sample(integration.samples, rng)
        fp = np.asarray(p.misfit(x), dtype=float)
        fq = np.asarray(q.misfit(x), dtype=float)
        bc = float(np.exp(-0.5 * (fp + fq)).mean()) / np.sqrt(p.z * q.z)
        return float(np.sqrt(np.clip(1.0 - bc, 0.0, 1.0)))
    raise ArgumentError(f"unknown integration scheme {integration!r}")


# -- Hellinger bounds -------------------------------------------------------


@dataclass(frozen=True)
class HellingerBoundInputs:
    """Eigenvalue data plus the posterior-dependent constant L.

    L^2 = (1/8) * (Z * exp(-E_prior[f]))^{-1/2} with f the exact misfit.
    """

    poincare: float
    eigenvalues: np.ndarray
    k: int
    epsilon: float
    l_const: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if self.poincare < 0 or self.epsilon < 0:
            raise ArgumentError("constants must be nonnegative")
        if np.any(lam < 0):
            raise ArgumentError("eigenvalues must be nonnegative")
        if not (1 <= self.k <= lam.shape[0] - 1):
            raise ArgumentError("split index out of range")
        if not (np.isfinite(self.l_const) and self.l_const > 0):
            raise ArgumentError("L must be positive and finite")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def active_sum(self) -> float:
        return float(self.eigenvalues[: self.k].sum())

    @property
    def inactive_sum(self) -> float:
        return float(self.eigenvalues[self.k :].sum())


def hellinger_bound_gpert(hb: HellingerBoundInputs) -> float:
    """Bound on d_H(posterior, ridge posterior): sqrt(C) L (eps sqrt(act) + sqrt(inact))."""
    mix = hb.epsilon * np.sqrt(hb.active_sum) + np.sqrt(hb.inactive_sum)
    return float(np.sqrt(hb.poincare) * hb.l_const * mix)


def hellinger_bound_gpert_gpertN(hb: HellingerBoundInputs, n_mc: int) -> float:
    """Bound on E[d_H(ridge posterior, MC-ridge posterior)]: previous / sqrt(N)."""
    if n_mc < 1:
        raise ArgumentError("n_mc must be >= 1")
    return hellinger_bound_gpert(hb) / np.sqrt(n_mc)


def hellinger_bound_total(hb: HellingerBoundInputs, n_mc: int) -> float:
    """Bound on E[d_H(posterior, MC-ridge posterior)].

    Computed as the sum of the two partial bounds so the triangle
    decomposition holds exactly in floating point; algebraically equal to
    (1 + N^{-1/2}) times the first bound.
    """
    return hellinger_bound_gpert(hb) + hellinger_bound_gpert_gpertN(hb, n_mc)


def estimate_L(spec: PosteriorSpec, m_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """MC estimate of L = 8^{-1/2} (Z exp(-E_prior[f]))^{-1/4} with stderr.

    Z and E_prior[f] are estimated from one shared prior sample; the
    standard error propagates through the log by the delta method,
    including the covariance of the two estimators.
    """
    if m_samples < 2:
        raise ArgumentError("m_samples must be >= 2")
    x = spec.prior.sample(m_samples, rng)
    f = np.asarray(spec.misfit(x), dtype=float)
    ez = np.exp(-f)
    z = float(ez.mean())
    i_hat = float(f.mean())
    if z <= 0:
        raise NumericError("nonpositive Z estimate")
    log_a = np.log(z) - i_hat
    l_val = float((0.125**0.5) * np.exp(-0.25 * log_a))
    var_z = ez.var(ddof=1)
    var_f = f.var(ddof=1)
    cov_zf = float(np.cov(ez, f, ddof=1)[0, 1])
    var_log_a = max(var_z / z**2 + var_f - 2.0 * cov_zf / z, 0.0) / m_samples
    return l_val, float(l_val * 0.25 * np.sqrt(var_log_a))


# -- Metropolis-Hastings in the active variable -----------------------------


@dataclass(frozen=True)
class ActiveTarget:
    """Unnormalized target on y: exp(-misfit_y(y)) * N(0, I_k) density.

    Restricted to Gaussian priors, whose active marginal is again standard
    normal by rotational symmetry.
    """

    misfit_y: Callable  # batch (m, k) -> (m,)
    k: int

    def log_density(self, y: np.ndarray) -> float:
        val = float(np.asarray(self.misfit_y(y[None, :]), dtype=float)[0])
        return -val - 0.5 * float(y @ y)


@dataclass(frozen=True)
class McmcResult:
    """Random-walk Metropolis output on the active variable."""

    states: np.ndarray  # (steps, k), includes burn-in
    misfits: np.ndarray  # (steps,)
    accepted: np.ndarray  # (steps,) bool; step 0 counts as accepted
    burn_in: int
    acceptance_rate: float
    iact: float
    x_samples: np.ndarray | None = None  # lifted full-space samples, retained part

    @property
    def retained(self) -> np.ndarray:
        return self.states[self.burn_in :]


def integrated_autocorr(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        return 1.0
    x = x - x.mean()
    m = 1
    while m < 2 * n:
        m *= 2
    spec = np.fft.rfft(x, n=m)
    acf = np.fft.irfft(spec * np.conj(spec), n=m)[:n].real
    if acf[0] <= 0:
        return 1.0
    acf /= acf[0]
    tau = 1.0
    for t in range(1, n):
        tau += 2.0 * acf[t]
        if t >= c * tau:
            break
    return float(max(tau, 1.0))


def metropolis_hastings_active(
    target: ActiveTarget,
    y0,
    proposal_std: float,
    steps: int,
    burn_in: int,
    rng: np.random.Generator,
    *,
    lift: ConditionalSampler | None = None,
) -> McmcResult:
    """Gaussian random-walk Metropolis targeting the active posterior.

    The proposal is symmetric, so acceptance uses the target ratio only.
    With ``lift``, one inactive draw per retained state reconstructs
    full-space samples x = W1 y + W2 z.
    """
    if proposal_std <= 0:
        raise ArgumentError("proposal stddev must be positive")
    if steps < burn_in:
        raise ArgumentError("steps must be at least burn_in")
    if burn_in < 0:
        raise ArgumentError("burn_in must be nonnegative")
    y = np.asarray(y0, dtype=float)
    if y.shape != (target.k,):
        raise ArgumentError(f"y0 must have shape ({target.k},)")
    noise = rng.standard_normal((steps, target.k))
    log_u = np.log(rng.random(steps))
    states = np.empty((steps, target.k))
    misfits = np.empty(steps)
    accepted = np.zeros(steps, dtype=bool)
    cur_misfit = float(np.asarray(target.misfit_y(y[None, :]), dtype=float)[0])
    cur_logp = -cur_misfit - 0.5 * float(y @ y)
    n_accept = 0
    for t in range(steps):
        prop = y + proposal_std * noise[t]
        prop_misfit = float(np.asarray(target.misfit_y(prop[None, :]), dtype=float)[0])
        prop_logp = -prop_misfit - 0.5 * float(prop @ prop)
        if log_u[t] < prop_logp - cur_logp:
            y = prop
            cur_misfit = prop_misfit
            cur_logp = prop_logp
            accepted[t] = True
            n_accept += 1
        states[t] = y
        misfits[t] = cur_misfit
    retained = states[burn_in:]
    if retained.shape[0] >= 4:
        iact = max(integrated_autocorr(retained[:, d]) for d in range(target.k))
    else:
        iact = 1.0
    x_samples = None
    if lift is not None and retained.shape[0] > 0:
        sub = lift.subspace
        x_samples = np.empty((retained.shape[0], sub.n))
        for i, yi in enumerate(retained):
            z = lift.sample(yi, 1, rng)[0]
            x_samples[i] = sub.w1 @ yi + sub.w2 @ z
    return McmcResult(
        states=states,
        misfits=misfits,
        accepted=accepted,
        burn_in=burn_in,
        acceptance_rate=n_accept / steps if steps else 0.0,
        iact=iact,
        x_samples=x_samples,
    )
