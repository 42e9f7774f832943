import numpy as np
import pytest

from activesub.conditional import ConditionalSampler
from activesub.problems import quadratic_gaussian_problem
from activesub.ridge import RidgeApprox


@pytest.fixture(scope="session")
def paper_problem():
    """The n=10, k=2 quadratic benchmark with its analytic subspace."""
    return quadratic_gaussian_problem()


@pytest.fixture(scope="session")
def paper_ridge10(paper_problem):
    """RidgeApprox with N=10 on the benchmark (closed-form reference)."""
    sampler = ConditionalSampler(paper_problem.dist, paper_problem.subspace)
    return RidgeApprox(paper_problem.gf, paper_problem.subspace, sampler, n_mc=10)


class SplitFrame:
    """Minimal subspace stand-in: an orthogonal frame split at k."""

    def __init__(self, q: np.ndarray, k: int):
        self.n = q.shape[0]
        self.k = k
        self.w = q
        self.w1 = q[:, :k]
        self.w2 = q[:, k:]


@pytest.fixture
def split_frame():
    def make(n: int, k: int, seed: int = 0) -> SplitFrame:
        rng = np.random.default_rng(seed)
        q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        return SplitFrame(q, k)

    return make
