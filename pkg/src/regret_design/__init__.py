"""Regret-aware experimental design for estimate-then-optimize pipelines.

Given a smooth objective f(x, theta), an estimator covariance model, and a
prior over theta, this package computes cross-derivative sensitivities,
optimizes experiment allocations against the trace regret-bound criterion,
and validates designs with a seeded Monte Carlo regret harness.
"""

from .design import (
    BoundReport,
    DesignObjective,
    bayesian_design_objective,
    bound_terms,
    c_optimal_allocation,
    kkt_group_allocation,
    random_search,
    round_allocation,
    uniform_allocation,
)
from .errors import RegretDesignError
from .estimation import (
    Allocation,
    DiagonalMeanModel,
    FitResult,
    LogisticMleModel,
    LognormalGroupMeanModel,
    covariance,
    fit_logistic_mle,
    simulate_estimate,
)
from .harness import (
    RegretReport,
    SweepResult,
    compare_designs,
    evaluate_regret,
    regret_vs_budget_sweep,
    trajectory_quantiles,
)
from .numerics import (
    FdConfig,
    RngStream,
    cross_derivative_matrix,
    mixed_second_derivative,
    symmetric_eigenvalues,
)
from .priors import GammaMatrixPrior, IndependentNormalPrior, PointMassPrior
from .problem import (
    BoundCheck,
    DecisionPoint,
    ObjectiveProblem,
    SmoothnessConstants,
    minimize,
    minimize_1d,
    solve_inner,
    verify_regret_bound,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BoundCheck",
    "BoundReport",
    "DecisionPoint",
    "DesignObjective",
    "DiagonalMeanModel",
    "FdConfig",
    "FitResult",
    "GammaMatrixPrior",
    "IndependentNormalPrior",
    "LogisticMleModel",
    "LognormalGroupMeanModel",
    "ObjectiveProblem",
    "PointMassPrior",
    "RegretDesignError",
    "RegretReport",
    "RngStream",
    "SmoothnessConstants",
    "SweepResult",
    "bayesian_design_objective",
    "bound_terms",
    "c_optimal_allocation",
    "compare_designs",
    "covariance",
    "cross_derivative_matrix",
    "evaluate_regret",
    "fit_logistic_mle",
    "kkt_group_allocation",
    "minimize",
    "minimize_1d",
    "mixed_second_derivative",
    "random_search",
    "regret_vs_budget_sweep",
    "round_allocation",
    "simulate_estimate",
    "solve_inner",
    "symmetric_eigenvalues",
    "trajectory_quantiles",
    "uniform_allocation",
    "verify_regret_bound",
]
