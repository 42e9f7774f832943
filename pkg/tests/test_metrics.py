import numpy as np
import pytest

from activesub.conditional import ConditionalSampler
from activesub.distributions import StandardNormal
from activesub.exceptions import ArgumentError
from activesub.metrics import (
    BoundInputs,
    bound_expct_fg_f,
    bound_f_fghat,
    bound_mse_f_fgN,
    bound_var_mc,
    bound_var_mc_pert,
    check_bound,
    expected_mse_study,
    mse,
)
from activesub.problems import exact_conditional_mse
from activesub.ridge import RidgeApprox
from activesub.rng import substream


@pytest.fixture(scope="module")
def paper_bounds(paper_problem):
    def make(n_mc, epsilon=0.0):
        return BoundInputs(1.0, paper_problem.spectrum, paper_problem.subspace.k, n_mc, epsilon)

    return make


class TestMse:
    def test_identical_functions(self):
        f = lambda x: x.sum(axis=1)
        est = mse(f, f, StandardNormal(2), 100, substream(1, "same"))
        assert est.value == 0.0
        assert est.stderr == 0.0

    def test_constant_offset(self):
        fa = lambda x: x.sum(axis=1)
        fb = lambda x: x.sum(axis=1) + 3.0
        est = mse(fa, fb, StandardNormal(2), 100, substream(2, "off"))
        assert est.value == pytest.approx(9.0, rel=1e-12)
        assert est.stderr == pytest.approx(0.0, abs=1e-12)

    def test_benchmark_f_vs_fg(self, paper_problem, paper_ridge10):
        est = mse(paper_problem.gf.f, paper_ridge10.f_g, paper_problem.dist,
                  10_000, substream(3, "ffg"))
        expected = 0.5 * paper_problem.inactive_sum
        assert abs(est.value - expected) <= 4 * est.stderr

    def test_small_sample_rejected(self):
        f = lambda x: x.sum(axis=1)
        with pytest.raises(ArgumentError):
            mse(f, f, StandardNormal(1), 1, substream(4, "small"))


class TestExpectedMseStudy:
    def test_deterministic_family_zero_spread(self, paper_problem, paper_ridge10):
        # with the shared-X-batch variant, a realization-independent fb
        # leaves nothing random: std and CV vanish exactly
        report = expected_mse_study(
            paper_problem.gf.f,
            lambda r: paper_ridge10.f_g,  # no realization dependence
            paper_problem.dist, 200, 5, seed=7, share_x_batch=True,
        )
        assert report.std == pytest.approx(0.0, abs=1e-9 * max(report.mean, 1.0))
        assert report.cv == pytest.approx(0.0, abs=1e-9)

    def test_benchmark_identity_at_n10(self, paper_problem, paper_ridge10):
        report = expected_mse_study(
            paper_ridge10.f_g,
            lambda r: (lambda x: paper_ridge10.f_gn_batch(x, r)),
            paper_problem.dist, 1_000, 300, seed=8, n_mc=10,
        )
        expected = 0.5 * paper_problem.inactive_sum / 10
        assert abs(report.mean - expected) <= 3 * report.mean_stderr

    def test_study_reproducible(self, paper_problem, paper_ridge10):
        def run():
            return expected_mse_study(
                paper_ridge10.f_g,
                lambda r: (lambda x: paper_ridge10.f_gn_batch(x, r)),
                paper_problem.dist, 100, 10, seed=13,
            )

        assert run() == run()

    def test_shared_batch_flag(self, paper_problem, paper_ridge10):
        kw = dict(n_x=100, realizations=6, seed=17)
        a = expected_mse_study(paper_ridge10.f_g,
                               lambda r: (lambda x: paper_ridge10.f_gn_batch(x, r)),
                               paper_problem.dist, kw["n_x"], kw["realizations"], kw["seed"],
                               share_x_batch=True)
        b = expected_mse_study(paper_ridge10.f_g,
                               lambda r: (lambda x: paper_ridge10.f_gn_batch(x, r)),
                               paper_problem.dist, kw["n_x"], kw["realizations"], kw["seed"],
                               share_x_batch=False)
        assert a.mean != b.mean  # distinct but both valid estimates

    def test_exact_identity_across_n(self, paper_problem):
        # E[MSE(f_g, f_gN)] = E[(f - f_g)^2] / N for each N
        sampler = ConditionalSampler(paper_problem.dist, paper_problem.subspace)
        exact = exact_conditional_mse(paper_problem.gf.quadratic, paper_problem.subspace)
        n_values = [2, 10, 50]
        ra = RidgeApprox(paper_problem.gf, paper_problem.subspace, sampler, n_mc=max(n_values))
        means = []
        for n in n_values:
            ra_n = RidgeApprox(paper_problem.gf, paper_problem.subspace, sampler, n_mc=n)
            report = expected_mse_study(
                ra_n.f_g,
                lambda r: (lambda x: ra_n.f_gn_batch(x, r)),
                paper_problem.dist, 500, 200, seed=19, n_mc=n,
            )
            assert abs(report.mean - exact / n) <= 3 * report.mean_stderr
            means.append(report.mean)
        slope = np.polyfit(np.log(n_values), np.log(means), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.05)


class TestBounds:
    def test_inactive_sum_value(self, paper_bounds, paper_problem):
        expected = float(np.sum(paper_problem.spectrum[2:]))
        assert bound_expct_fg_f(paper_bounds(1)) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(226.2, abs=0.1)

    def test_zero_inactive(self):
        b = BoundInputs(1.0, np.array([4.0, 0.0]), 1, 10)
        assert bound_expct_fg_f(b) == 0.0
        assert bound_var_mc(b) == 0.0
        assert bound_f_fghat(b) == 0.0

    def test_linearity_in_poincare(self, paper_problem):
        b1 = BoundInputs(1.0, paper_problem.spectrum, 2, 5)
        b2 = BoundInputs(2.0, paper_problem.spectrum, 2, 5)
        assert bound_expct_fg_f(b2) == pytest.approx(2 * bound_expct_fg_f(b1), rel=1e-12)

    def test_var_mc_values(self, paper_bounds):
        assert bound_var_mc(paper_bounds(10)) == pytest.approx(22.62, abs=0.01)
        assert bound_var_mc(paper_bounds(1)) == bound_expct_fg_f(paper_bounds(1))

    def test_perturbed_bound_values(self, paper_bounds, paper_problem):
        b = paper_bounds(1, epsilon=0.01)
        act = float(np.sum(paper_problem.spectrum[:2]))
        inact = float(np.sum(paper_problem.spectrum[2:]))
        expected = (0.01 * np.sqrt(act) + np.sqrt(inact)) ** 2
        assert bound_f_fghat(b) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(266.3, abs=0.2)
        assert bound_f_fghat(paper_bounds(1, epsilon=0.0)) == pytest.approx(
            bound_expct_fg_f(paper_bounds(1)), rel=1e-12
        )

    def test_var_mc_pert_relations(self, paper_bounds):
        assert bound_var_mc_pert(paper_bounds(1, 0.01)) == bound_f_fghat(paper_bounds(1, 0.01))
        assert bound_var_mc_pert(paper_bounds(100, 0.01)) == pytest.approx(2.663, abs=0.002)
        assert bound_var_mc_pert(paper_bounds(10, 0.0)) == pytest.approx(
            bound_var_mc(paper_bounds(10)), rel=1e-12
        )

    def test_total_mse_bound(self, paper_bounds):
        b10 = paper_bounds(10)
        assert bound_mse_f_fgN(b10) == pytest.approx((1 + 10**-0.5) ** 2 * 226.2036735432187, rel=1e-6)
        assert bound_mse_f_fgN(paper_bounds(1)) == pytest.approx(4 * bound_f_fghat(paper_bounds(1)), rel=1e-12)
        huge = paper_bounds(10**12)
        assert bound_mse_f_fgN(huge) == pytest.approx(bound_f_fghat(huge), rel=1e-5)

    def test_monotonicity(self):
        gen = substream(23, "mono")
        for _ in range(20):
            lam = np.sort(gen.random(5))[::-1] + 0.1
            k = int(gen.integers(1, 5))
            n = int(gen.integers(1, 50))
            c = float(gen.random() + 0.5)
            eps = float(gen.random())
            base = BoundInputs(c, lam, k, n, eps)
            for fn in (bound_expct_fg_f, bound_var_mc, bound_f_fghat,
                       bound_var_mc_pert, bound_mse_f_fgN):
                v0 = fn(base)
                assert fn(BoundInputs(c * 1.5, lam, k, n, eps)) >= v0
                assert fn(BoundInputs(c, lam * 1.3, k, n, eps)) >= v0
                assert fn(BoundInputs(c, lam, k, n, eps * 1.5)) >= v0
                assert fn(BoundInputs(c, lam, k, n + 5, eps)) <= v0


class TestCheckBound:
    def test_satisfied_with_slack(self):
        v = check_bound(11.31, 0.2, 22.62)
        assert v.satisfied
        assert v.slack == pytest.approx(11.31, rel=1e-9)

    def test_zero_vs_zero(self):
        assert check_bound(0.0, 0.0, 0.0).satisfied

    def test_violated(self):
        v = check_bound(5.0, 0.01, 1.0)
        assert not v.satisfied
        assert v.slack < 0

    def test_three_se_grace(self):
        assert check_bound(1.05, 0.02, 1.0).satisfied
        assert not check_bound(1.10, 0.02, 1.0).satisfied


class TestValidation:
    def test_bound_inputs_validation(self):
        with pytest.raises(ArgumentError):
            BoundInputs(-1.0, np.array([2.0, 1.0]), 1, 1)
        with pytest.raises(ArgumentError):
            BoundInputs(1.0, np.array([2.0, -1.0]), 1, 1)
        with pytest.raises(ArgumentError):
            BoundInputs(1.0, np.array([2.0, 1.0]), 2, 1)
        with pytest.raises(ArgumentError):
            BoundInputs(1.0, np.array([2.0, 1.0]), 1, 0)
