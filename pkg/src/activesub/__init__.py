"""Active-subspace dimension reduction toolkit.

Estimates gradient-based active subspaces, builds conditional-expectation
ridge approximations and their Monte Carlo estimators, checks the
associated mean-squared-error and Hellinger-distance bounds (including
under subspace perturbation), and applies the machinery to Bayesian
inversion with an active-variable Metropolis sampler.
"""

__version__ = "0.1.0"

from .conditional import ConditionalSampler
from .distributions import (
    PoincareConstant,
    StandardNormal,
    UniformBall,
    UniformBox,
    poincare_constant,
)
from .exceptions import ArgumentError, ConfigError, DomainError, NumericError, ToolkitError
from .metrics import (
    BoundInputs,
    MseEstimate,
    MseReport,
    bound_expct_fg_f,
    bound_f_fghat,
    bound_mse_f_fgN,
    bound_var_mc,
    bound_var_mc_pert,
    check_bound,
    expected_mse_study,
    mse,
)
from .problems import quadratic_gaussian_problem
from .ridge import ClosedForm, HighAccuracyMC, Realization, RidgeApprox
from .rng import scratch_substream, substream
from .subspace import (
    ActiveSubspace,
    GradientFunction,
    PerturbedSubspace,
    QuadraticForm,
    choose_k,
    coords,
    eigendecompose,
    estimate_c,
    exact_c_quadratic,
    perturb,
    reconstruct,
    split,
)

__all__ = [
    "__version__",
    "ActiveSubspace",
    "ArgumentError",
    "BoundInputs",
    "ClosedForm",
    "ConditionalSampler",
    "ConfigError",
    "DomainError",
    "GradientFunction",
    "HighAccuracyMC",
    "MseEstimate",
    "MseReport",
    "NumericError",
    "PerturbedSubspace",
    "PoincareConstant",
    "QuadraticForm",
    "Realization",
    "RidgeApprox",
    "StandardNormal",
    "ToolkitError",
    "UniformBall",
    "UniformBox",
    "bound_expct_fg_f",
    "bound_f_fghat",
    "bound_mse_f_fgN",
    "bound_var_mc",
    "bound_var_mc_pert",
    "check_bound",
    "choose_k",
    "coords",
    "eigendecompose",
    "estimate_c",
    "exact_c_quadratic",
    "expected_mse_study",
    "mse",
    "perturb",
    "poincare_constant",
    "quadratic_gaussian_problem",
    "reconstruct",
    "scratch_substream",
    "split",
    "substream",
]
