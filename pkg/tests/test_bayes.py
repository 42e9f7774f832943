import numpy as np
import pytest

from activesub.bayes import (
    ActiveTarget,
    DensityWithZ,
    GridQuadrature,
    HellingerBoundInputs,
    LinearForward,
    McmcResult,
    PosteriorSpec,
    PriorMonteCarlo,
    estimate_L,
    hellinger,
    hellinger_bound_gpert,
    hellinger_bound_gpert_gpertN,
    hellinger_bound_total,
    integrated_autocorr,
    metropolis_hastings_active,
    normalizing_constant,
    posterior_variant,
    unnormalized_posterior,
)
from activesub.conditional import ConditionalSampler
from activesub.distributions import StandardNormal, UniformBox
from activesub.exceptions import ArgumentError, NumericError
from activesub.ridge import Realization, RidgeApprox
from activesub.rng import substream
from activesub.subspace import ActiveSubspace, choose_k, eigendecompose


def make_spec(g, d, gamma=None, n=None):
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n = n or g.shape[1]
    gamma = np.eye(g.shape[0]) if gamma is None else np.asarray(gamma, dtype=float)
    return PosteriorSpec(StandardNormal(n), LinearForward(g), np.asarray(d, dtype=float), gamma)


@pytest.fixture(scope="module")
def desk_spec():
    return make_spec([[2.0, 0.8], [0.0, 0.4]], [0.6, -0.2])


@pytest.fixture(scope="module")
def desk_ridge(desk_spec):
    gf = desk_spec.misfit_gradient_function()
    c = gf.quadratic.exact_gradient_covariance()
    lam, w = eigendecompose(c)
    sub = ActiveSubspace(lam, w, choose_k(lam), c_hat=c)
    sampler = ConditionalSampler(desk_spec.prior, sub)
    return RidgeApprox(gf, sub, sampler, n_mc=8)


class TestDataMisfit:
    def test_perfect_fit(self):
        spec = make_spec(np.eye(2), [0.3, -0.4])
        assert spec.misfit(np.array([0.3, -0.4])) == pytest.approx(0.0, abs=1e-15)

    def test_scalar_formula(self):
        spec = make_spec([[0.0]], [1.0], gamma=[[4.0]])
        assert spec.misfit(np.array([7.0])) == pytest.approx(1.0 / 8.0)

    def test_non_spd_noise_rejected(self):
        with pytest.raises(ArgumentError):
            make_spec([[1.0]], [0.0], gamma=[[-1.0]])

    def test_conjugate_posterior_mean_oracle(self, desk_spec):
        # grid posterior mean must match the analytic linear-Gaussian update
        g = desk_spec.forward.matrix
        d = desk_spec.data
        precision = g.T @ g + np.eye(2)
        analytic = np.linalg.solve(precision, g.T @ d)
        axis = np.linspace(-6, 6, 601)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        dens = np.exp(-desk_spec.misfit(pts)) * desk_spec.prior.density(pts)
        dens /= dens.sum()
        mean = (pts * dens[:, None]).sum(axis=0)
        assert np.abs(mean - analytic).max() <= 1e-3

    def test_misfit_gradient_function_validates(self, desk_spec):
        gf = desk_spec.misfit_gradient_function()
        gf.validate_gradient(substream(1, "mgrad"))
        x = substream(1, "mx").standard_normal((5, 2))
        assert np.allclose(gf.f(x), desk_spec.misfit(x))


class TestPosteriorVariants:
    def test_zero_misfit_returns_prior(self):
        spec = make_spec([[0.0, 0.0]], [0.0])
        pv = posterior_variant(spec, "exact")
        x = np.array([0.5, -1.0])
        assert unnormalized_posterior(pv, x) == pytest.approx(spec.prior.density(x), rel=1e-12)

    def test_exact_value_at_point(self, desk_spec):
        pv = posterior_variant(desk_spec, "exact")
        x = np.zeros(2)
        m = desk_spec.misfit(x)
        assert unnormalized_posterior(pv, x) == pytest.approx(
            np.exp(-m) * desk_spec.prior.density(x), rel=1e-12
        )

    def test_dominated_by_prior(self, desk_spec, desk_ridge):
        xs = desk_spec.prior.sample(200, substream(2, "dom"))
        for kind, ridge in (("exact", None), ("ridge", desk_ridge)):
            pv = posterior_variant(desk_spec, kind, ridge)
            vals = unnormalized_posterior(pv, xs)
            assert np.all(vals <= desk_spec.prior.density(xs) + 1e-15)

    def test_random_variant_needs_realization(self, desk_spec, desk_ridge):
        pv = posterior_variant(desk_spec, "ridge_mc", desk_ridge)
        with pytest.raises(ArgumentError):
            unnormalized_posterior(pv, np.zeros(2))

    def test_ridge_structure_collapses_randomness(self):
        # rank-one forward: misfit depends only on the active variable, so
        # the MC ridge equals the ridge for every realization
        spec = make_spec([[2.0, 1.0]], [0.5])
        gf = spec.misfit_gradient_function()
        c = gf.quadratic.exact_gradient_covariance()
        lam, w = eigendecompose(c)
        sub = ActiveSubspace(lam, w, 1, c_hat=c)
        sampler = ConditionalSampler(spec.prior, sub)
        ra = RidgeApprox(gf, sub, sampler, n_mc=3)
        pv_g = posterior_variant(spec, "ridge", ra)
        pv_gn = posterior_variant(spec, "ridge_mc", ra)
        xs = spec.prior.sample(20, substream(3, "rank1"))
        for r in range(4):
            a = unnormalized_posterior(pv_gn, xs, Realization(index=r, seed=11))
            b = unnormalized_posterior(pv_g, xs)
            assert np.allclose(a, b, rtol=1e-10)

    def test_labels(self, desk_spec, desk_ridge):
        assert posterior_variant(desk_spec, "exact").label == "exact"
        assert posterior_variant(desk_spec, "ridge", desk_ridge).label == "ridge"
        assert posterior_variant(desk_spec, "ridge_mc", desk_ridge).label == "ridge_mc"


class TestNormalizingConstant:
    def test_zero_misfit(self):
        spec = make_spec([[0.0, 0.0]], [0.0])
        pv = posterior_variant(spec, "exact")
        z, se = normalizing_constant(pv, spec.prior, 1000, substream(4, "z1"))
        assert z == 1.0
        assert se == 0.0

    def test_constant_misfit(self):
        spec = make_spec([[0.0]], [3.0], gamma=[[2.0]])  # misfit = 9/4 everywhere
        pv = posterior_variant(spec, "exact")
        z, se = normalizing_constant(pv, spec.prior, 500, substream(5, "z2"))
        assert z == pytest.approx(np.exp(-2.25), rel=1e-12)
        assert se == pytest.approx(0.0, abs=1e-15)

    def test_jensen_lower_bound(self, desk_spec):
        pv = posterior_variant(desk_spec, "exact")
        m = 100_000
        z, z_se = normalizing_constant(pv, desk_spec.prior, m, substream(6, "zj"))
        f_vals = desk_spec.misfit(desk_spec.prior.sample(m, substream(6, "fj")))
        floor = np.exp(-f_vals.mean())
        floor_se = floor * f_vals.std(ddof=1) / np.sqrt(m)
        assert z >= floor - 3 * (z_se + floor_se)


class TestHellinger:
    def test_identical_densities(self):
        prior = StandardNormal(1)
        p = DensityWithZ(prior, lambda x: 0.1 * x[:, 0] ** 2, z=0.9)
        assert hellinger(p, p, GridQuadrature(-9, 9, 1001)) == 0.0

    def test_disjoint_supports(self):
        left = UniformBox(np.array([-2.0]), np.array([-1.0]))
        right = UniformBox(np.array([1.0]), np.array([2.0]))
        zero = lambda x: np.zeros(x.shape[0])
        p = DensityWithZ(left, zero, z=1.0)
        q = DensityWithZ(right, zero, z=1.0)
        assert hellinger(p, q, GridQuadrature(-3, 3, 6001)) == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_closed_form(self):
        prior = StandardNormal(1)
        mu = 1.0
        p = DensityWithZ(prior, lambda x: np.zeros(x.shape[0]), z=1.0)
        q = DensityWithZ(prior, lambda x: mu**2 / 2 - mu * x[:, 0], z=1.0)
        exact = np.sqrt(1.0 - np.exp(-(mu**2) / 8.0))
        grid = hellinger(p, q, GridQuadrature(-10, 11, 4001))
        assert grid == pytest.approx(exact, abs=1e-4)
        mc = hellinger(p, q, PriorMonteCarlo(200_000), substream(7, "hmc"))
        assert mc == pytest.approx(exact, abs=5e-3)

    def test_symmetry_and_range(self):
        prior = StandardNormal(2)
        p = DensityWithZ(prior, lambda x: 0.3 * x[:, 0] ** 2, z=0.88)
        q = DensityWithZ(prior, lambda x: 0.1 * np.abs(x[:, 1]), z=0.91)
        grid = GridQuadrature(-8, 8, 301)
        d_pq = hellinger(p, q, grid)
        d_qp = hellinger(q, p, grid)
        assert d_pq == d_qp
        assert 0.0 <= d_pq <= 1.0

    def test_triangle_inequality(self):
        prior = StandardNormal(1)
        grid = GridQuadrature(-9, 9, 4001)
        mk = lambda a: DensityWithZ(prior, lambda x: a * x[:, 0] ** 2, z=1.0 / np.sqrt(1 + 2 * a))
        p, q, r = mk(0.1), mk(0.6), mk(2.0)
        assert hellinger(p, r, grid) <= hellinger(p, q, grid) + hellinger(q, r, grid) + 1e-6

    def test_bad_z_rejected(self):
        prior = StandardNormal(1)
        with pytest.raises(NumericError):
            DensityWithZ(prior, lambda x: np.zeros(x.shape[0]), z=0.0)

    def test_grid_dimension_limit(self):
        prior = StandardNormal(4)
        p = DensityWithZ(prior, lambda x: np.zeros(x.shape[0]), z=1.0)
        with pytest.raises(ArgumentError):
            hellinger(p, p, GridQuadrature(-2, 2, 5))


class TestEstimateL:
    def test_zero_misfit(self):
        spec = make_spec([[0.0, 0.0]], [0.0])
        l_val, se = estimate_L(spec, 1000, substream(8, "l0"))
        assert l_val == pytest.approx(np.sqrt(1.0 / 8.0), rel=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_constant_misfit(self):
        c = 9.0 / 8.0  # misfit of G = 0, d = 1.5, gamma = 1
        spec = make_spec([[0.0]], [1.5])
        l_val, _ = estimate_L(spec, 1000, substream(9, "lc"))
        assert l_val == pytest.approx(np.sqrt(np.exp(c) / 8.0), rel=1e-12)

    def test_quadrature_cross_check(self):
        spec = make_spec([[1.5]], [0.8])
        l_mc, _ = estimate_L(spec, 400_000, substream(10, "lq"))
        axis = np.linspace(-9, 9, 20001)[:, None]
        w = np.full(axis.shape[0], axis[1, 0] - axis[0, 0])
        w[0] = w[-1] = w[0] / 2
        f = spec.misfit(axis)
        rho = spec.prior.density(axis)
        z = float(w @ (np.exp(-f) * rho))
        integral = float(w @ (f * rho))
        l_grid = (0.125 * (z * np.exp(-integral)) ** -0.5) ** 0.5
        assert l_mc == pytest.approx(l_grid, rel=0.01)


class TestHellingerBounds:
    def test_zero_cases(self):
        hb = HellingerBoundInputs(1.0, np.array([4.0, 0.0]), 1, 0.0, 0.5)
        assert hellinger_bound_gpert(hb) == 0.0

    def test_linear_in_l(self):
        lam = np.array([4.0, 1.0])
        h1 = HellingerBoundInputs(1.0, lam, 1, 0.1, 0.5)
        h2 = HellingerBoundInputs(1.0, lam, 1, 0.1, 1.0)
        assert hellinger_bound_gpert(h2) == pytest.approx(2 * hellinger_bound_gpert(h1), rel=1e-12)

    def test_mc_bound_scaling(self):
        hb = HellingerBoundInputs(1.0, np.array([4.0, 1.0]), 1, 0.1, 0.5)
        assert hellinger_bound_gpert_gpertN(hb, 1) == hellinger_bound_gpert(hb)
        assert hellinger_bound_gpert_gpertN(hb, 100) == pytest.approx(
            hellinger_bound_gpert(hb) / 10.0, rel=1e-12
        )
        vals = [hellinger_bound_gpert_gpertN(hb, n) for n in (1, 4, 16, 64)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_total_is_exact_sum(self):
        gen = substream(11, "tot")
        for _ in range(20):
            lam = np.sort(gen.random(4))[::-1] + 0.05
            hb = HellingerBoundInputs(float(gen.random() + 0.5), lam, 2,
                                      float(gen.random()), float(gen.random() + 0.1))
            n = int(gen.integers(1, 200))
            assert hellinger_bound_total(hb, n) == (
                hellinger_bound_gpert(hb) + hellinger_bound_gpert_gpertN(hb, n)
            )


class TestMcmc:
    def test_standard_normal_target(self):
        target = ActiveTarget(misfit_y=lambda y: np.zeros(y.shape[0]), k=1)
        res = metropolis_hastings_active(target, np.zeros(1), 2.4, 40_000, 4_000,
                                         substream(12, "mct"))
        y = res.retained[:, 0]
        assert abs(y.mean()) <= 0.05
        assert y.var() == pytest.approx(1.0, abs=0.1)
        assert 0.1 <= res.acceptance_rate <= 0.8

    def test_burn_in_equals_steps(self):
        target = ActiveTarget(misfit_y=lambda y: np.zeros(y.shape[0]), k=1)
        res = metropolis_hastings_active(target, np.zeros(1), 1.0, 50, 50, substream(13, "mcb"))
        assert res.retained.shape == (0, 1)

    def test_argument_validation(self):
        target = ActiveTarget(misfit_y=lambda y: np.zeros(y.shape[0]), k=1)
        with pytest.raises(ArgumentError):
            metropolis_hastings_active(target, np.zeros(1), 0.0, 10, 0, substream(14, "s"))
        with pytest.raises(ArgumentError):
            metropolis_hastings_active(target, np.zeros(1), 1.0, 10, 20, substream(14, "s"))

    def test_tiny_proposal_accepts_everything(self):
        # symmetric proposal: acceptance depends on the target ratio only,
        # which tends to 1 as the step size vanishes
        target = ActiveTarget(misfit_y=lambda y: np.zeros(y.shape[0]), k=1)
        res = metropolis_hastings_active(target, np.zeros(1), 1e-8, 2_000, 0, substream(15, "tp"))
        assert res.acceptance_rate >= 0.999

    def test_lift_reconstructs_projection(self, desk_spec, desk_ridge):
        target = ActiveTarget(misfit_y=lambda y: desk_ridge.g(y), k=1)
        res = metropolis_hastings_active(
            target, np.zeros(1), 1.0, 500, 100, substream(16, "lift"),
            lift=desk_ridge.sampler,
        )
        assert res.x_samples is not None
        proj = res.x_samples @ desk_ridge.subspace.w1
        assert np.abs(proj - res.retained).max() <= 1e-10


class TestIact:
    def test_iid_near_one(self):
        x = substream(17, "iid").standard_normal(20_000)
        assert integrated_autocorr(x) == pytest.approx(1.0, abs=0.3)

    def test_ar1_matches_theory(self):
        phi = 0.9
        gen = substream(18, "ar1")
        eps = gen.standard_normal(200_000)
        x = np.empty_like(eps)
        x[0] = eps[0]
        for i in range(1, len(eps)):
            x[i] = phi * x[i - 1] + eps[i]
        tau = integrated_autocorr(x)
        assert tau == pytest.approx((1 + phi) / (1 - phi), rel=0.4)
