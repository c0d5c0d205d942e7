"""Scalar quadratic objective f(x, theta) = (theta_1 / 2) x^2 + theta_0 x.

The inner optimum is x* = -theta_0 / theta_1 (well-posed for theta_1 > 0) and
the cross-derivative at the optimum is (1, -theta_0 / theta_1). Because
df/dx is linear in theta, the third-order mixed bound is exactly zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateParameter
from ..problem import DecisionPoint, ObjectiveProblem

__all__ = ["make_problem", "quadratic_d", "regret_closed_form"]


def _evaluate(x: np.ndarray, theta: np.ndarray) -> float:
    return 0.5 * theta[1] * x[0] ** 2 + theta[0] * x[0]


def quadratic_d(theta: np.ndarray) -> np.ndarray:
    """Cross-derivative (1, -theta_0 / theta_1) at the inner optimum."""
    theta = np.asarray(theta, dtype=float)
    if theta[1] == 0.0:
        raise DegenerateParameter("theta_1 = 0: the quadratic has no interior optimum")
    return np.array([1.0, -theta[0] / theta[1]])


def regret_closed_form(theta_star: np.ndarray, x_hat: float) -> float:
    """Exact regret (theta_1 / 2) (x_hat - x*)^2 of deciding x_hat under theta_star."""
    theta_star = np.asarray(theta_star, dtype=float)
    x_star = -theta_star[0] / theta_star[1]
    return 0.5 * theta_star[1] * (x_hat - x_star) ** 2


def _solve(theta: np.ndarray, tol: float) -> DecisionPoint:
    if theta[1] <= 0.0:
        raise DegenerateParameter(
            f"theta_1 = {theta[1]!r} <= 0: quadratic objective is unbounded below"
        )
    x = np.array([-theta[0] / theta[1]])
    return DecisionPoint(x, _evaluate(x, theta), True, 0)


def make_problem() -> ObjectiveProblem:
    return ObjectiveProblem(
        dim_x=1,
        dim_theta=2,
        evaluate=_evaluate,
        lower=np.array([-np.inf]),
        upper=np.array([np.inf]),
        label="quadratic",
        analytic_cross_derivative=lambda x, theta: np.array([[1.0, x[0]]]),
        solver=_solve,
        default_start=np.array([0.0]),
    )
