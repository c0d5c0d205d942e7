"""Revenue pricing under a logistic conversion curve.

Demand follows c(x, theta) = 1 / (1 + exp(theta_0 + theta_1 x)) and the
objective is negated revenue f(x, theta) = -x c(x, theta), minimized over a
price interval. The cross-derivative has the closed form implemented in
:func:`pricing_d`, and the first-order condition for the optimal price is
x* = 1 / (theta_1 (1 - c(x*, theta))).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NoInteriorMinimum
from ..problem import DecisionPoint, ObjectiveProblem, minimize_1d

__all__ = [
    "DEFAULT_PRICE_GRID",
    "conversion",
    "curvature",
    "make_problem",
    "optimal_price",
    "pricing_d",
]

DEFAULT_PRICE_GRID = tuple(float(p) for p in range(10))
PRICE_CAP = 50.0


def conversion(x: float, theta: np.ndarray) -> float:
    """Purchase probability at price x, computed overflow-safe."""
    z = theta[0] + theta[1] * x
    if z >= 0.0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def _evaluate(x: np.ndarray, theta: np.ndarray) -> float:
    return -x[0] * conversion(x[0], theta)


def pricing_d(x: float, theta: np.ndarray) -> np.ndarray:
    """Mixed partials (d^2 f / dx dtheta_0, d^2 f / dx dtheta_1) at (x, theta)."""
    theta = np.asarray(theta, dtype=float)
    c = conversion(x, theta)
    cw = c * (1.0 - c)
    skew = cw * (2.0 * c - 1.0)
    d0 = cw + theta[1] * x * skew
    d1 = 2.0 * x * cw + theta[1] * x * x * skew
    return np.array([d0, d1])


def curvature(x: float, theta: np.ndarray) -> float:
    """Second derivative d^2 f / dx^2, positive near the optimal price."""
    c = conversion(x, theta)
    return c * (1.0 - c) * (1.0 + theta[1] - theta[1] ** 2 * x * (1.0 - 2.0 * c))


def slope(x: float, theta: np.ndarray) -> float:
    """First derivative df/dx = -c + theta_1 x c (1 - c)."""
    c = conversion(x, theta)
    return -c + theta[1] * x * c * (1.0 - c)


def optimal_price(theta: np.ndarray, lo: float = 0.0, hi: float = PRICE_CAP,
                  tol: float = 1e-8) -> DecisionPoint:
    """Revenue-optimal price on [lo, hi].

    Golden section plus finite-difference Newton locates the optimum, then a
    few Newton steps on the analytic first-order condition polish it to
    machine precision (the fixed point x = 1 / (theta_1 (1 - c)) then holds
    far inside 1e-8). When the fitted demand slopes the wrong way
    (theta_1 <= 0, possible for noisy estimates) the revenue is monotone in
    price and the better endpoint is returned.
    """
    theta = np.asarray(theta, dtype=float)
    try:
        x = minimize_1d(lambda p: -p * conversion(p, theta), (lo, hi), tol=tol)
        for _ in range(8):
            d1 = slope(x, theta)
            d2 = curvature(x, theta)
            if abs(d1) <= 1e-13 or d2 <= 0.0:
                break
            x = min(max(x - d1 / d2, lo), hi)
        converged = True
    except NoInteriorMinimum:
        x = lo if lo * conversion(lo, theta) >= hi * conversion(hi, theta) else hi
        converged = True
    pt = np.array([float(x)])
    return DecisionPoint(pt, _evaluate(pt, theta), converged, 0)


def make_problem(price_cap: float = PRICE_CAP) -> ObjectiveProblem:
    return ObjectiveProblem(
        dim_x=1,
        dim_theta=2,
        evaluate=_evaluate,
        lower=np.array([0.0]),
        upper=np.array([price_cap]),
        label="pricing",
        analytic_cross_derivative=lambda x, theta: pricing_d(x[0], theta).reshape(1, 2),
        solver=lambda theta, tol: optimal_price(theta, hi=price_cap, tol=tol),
        default_start=np.array([1.0]),
    )
