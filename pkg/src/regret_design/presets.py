"""Ready-to-run experiment bundles with the default study configurations.

A bundle wires a problem to its estimator model, prior, design routine and
uniform baseline, so the CLI and the validation suite share one source of
truth for each experiment's configuration. Defaults reproduce the reference
study setups; every knob can be overridden.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design import (
    DesignObjective,
    c_optimal_allocation,
    random_search,
    round_allocation,
    uniform_allocation,
)
from .estimation import (
    Allocation,
    DiagonalMeanModel,
    LogisticMleModel,
    LognormalGroupMeanModel,
)
from .numerics import RngStream
from .priors import GammaMatrixPrior, IndependentNormalPrior
from .problem import ObjectiveProblem
from .problems import pandemic, pricing, quadratic

__all__ = ["ExperimentBundle", "pandemic_bundle", "pricing_bundle", "quadratic_bundle"]

SQRT3 = float(np.sqrt(3.0))


@dataclass(frozen=True)
class ExperimentBundle:
    label: str
    problem: ObjectiveProblem
    cov_model: object
    prior: object
    budget: int
    prior_draws: int
    replications: int
    designer: Callable[[int, RngStream], Allocation]
    uniform: Callable[[int], Allocation]
    solver_tol: float = 1e-8


def quadratic_bundle(
    budget: int = 100,
    sigma: tuple[float, float] = (1.0, SQRT3),
    prior_mean: tuple[float, float] = (10.0, 5.0),
    prior_sd: tuple[float, float] = (1.0, 1.0),
    prior_draws: int = 100,
    replications: int = 300,
) -> ExperimentBundle:
    """Two-component sampling design with the closed-form optimal split."""
    problem = quadratic.make_problem()
    model = DiagonalMeanModel(np.asarray(sigma, dtype=float))
    prior = IndependentNormalPrior(np.asarray(prior_mean, float), np.asarray(prior_sd, float))

    def designer(total: int, stream: RngStream) -> Allocation:
        # the diagonal-normal criterion separates per component, so the split
        # has a closed form; evaluating it at the prior mean is the analytical
        # optimum and keeps the design independent of the draw set
        frac = c_optimal_allocation(quadratic.quadratic_d(prior.mean), model.sigma)
        return round_allocation(frac, total, min_per_point=1)

    return ExperimentBundle(
        label="quadratic",
        problem=problem,
        cov_model=model,
        prior=prior,
        budget=budget,
        prior_draws=prior_draws,
        replications=replications,
        designer=designer,
        uniform=lambda total: uniform_allocation(model.design_points, total, min_per_point=1),
    )


def pricing_bundle(
    prior_mean: tuple[float, float] = (-4.0, 1.0),
    prior_sd: tuple[float, float] = (0.1, 0.1),
    budget: int = 100,
    prices=pricing.DEFAULT_PRICE_GRID,
    candidates: int = 1000,
    prior_draws: int = 100,
    replications: int = 300,
) -> ExperimentBundle:
    """Price experiment design by random search over integer allocations."""
    problem = pricing.make_problem()
    model = LogisticMleModel(np.asarray(prices, dtype=float))
    prior = IndependentNormalPrior(np.asarray(prior_mean, float), np.asarray(prior_sd, float))

    def designer(total: int, stream: RngStream) -> Allocation:
        obj = DesignObjective(problem, model, prior, prior_draws, total, stream.child(0))
        return random_search(obj, candidates, stream.child(1))

    return ExperimentBundle(
        label="pricing",
        problem=problem,
        cov_model=model,
        prior=prior,
        budget=budget,
        prior_draws=prior_draws,
        replications=replications,
        designer=designer,
        uniform=lambda total: uniform_allocation(model.design_points, total),
    )


def pandemic_bundle(
    params: pandemic.SirParams | None = None,
    budget: int = 10,
    prior_draws: int = 1000,
    replications: int = 1000,
) -> ExperimentBundle:
    """Contact-trace design for the testing-control problem (closed-form counts)."""
    if params is None:
        params = pandemic.default_params()
    problem = pandemic.make_problem(params)
    model = LognormalGroupMeanModel(params.n_groups)
    prior = GammaMatrixPrior(params.contact_matrix)

    def designer(total: int, stream: RngStream) -> Allocation:
        return pandemic.design_allocation(params, prior, total, prior_draws, stream)

    return ExperimentBundle(
        label="pandemic",
        problem=problem,
        cov_model=model,
        prior=prior,
        budget=budget,
        prior_draws=prior_draws,
        replications=replications,
        designer=designer,
        uniform=lambda total: uniform_allocation(model.design_points, total, min_per_point=1),
        solver_tol=1e-5,
    )
