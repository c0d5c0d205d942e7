"""Objective-model abstraction and the inner optimizers.

An :class:`ObjectiveProblem` packages a smooth objective f(x, theta) together
with box bounds on x and optional analytic shortcuts. The "optimize" half of
estimate-then-optimize is :func:`solve_inner`, which dispatches to a
problem-specific solver when one is registered and otherwise runs the
box-constrained quasi-Newton method in :func:`minimize`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameter, NoInteriorMinimum, NonFiniteEvaluation
from .numerics import FdConfig, cross_derivative_matrix

__all__ = [
    "BoundCheck",
    "DecisionPoint",
    "ObjectiveProblem",
    "SmoothnessConstants",
    "cross_derivative",
    "fd_gradient",
    "minimize",
    "minimize_1d",
    "solve_inner",
    "verify_regret_bound",
]

Objective = Callable[[np.ndarray, np.ndarray], float]
BatchObjective = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ObjectiveProblem:
    """A smooth structural model f(x, theta) with box constraints on x.

    ``evaluate`` must be a stateless, finite evaluator on box x parameter
    domain. ``analytic_cross_derivative`` (when present) returns the
    (dim_x, dim_theta) matrix of mixed partials and must agree with the finite
    difference estimate; that agreement is a testable contract.
    ``solver`` performs the exact inner minimization for a given theta and is
    what the Monte Carlo harness calls; problems without one fall back to
    multi-start quasi-Newton. ``evaluate_batch`` evaluates stacked (m, dim_x),
    (m, dim_theta) inputs in one call for simulation-backed objectives.
    """

    dim_x: int
    dim_theta: int
    evaluate: Objective
    lower: np.ndarray
    upper: np.ndarray
    label: str
    analytic_cross_derivative: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    solver: Optional[Callable[[np.ndarray, float], "DecisionPoint"]] = None
    evaluate_batch: Optional[BatchObjective] = None
    default_start: Optional[np.ndarray] = None
    gradient_step: float = 1e-6

    def __post_init__(self) -> None:
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dim_x,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dim_x,)).copy()
        if np.any(lower > upper):
            raise InvalidParameter("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def start_point(self) -> np.ndarray:
        if self.default_start is not None:
            return np.asarray(self.default_start, dtype=float).copy()
        lo = np.where(np.isfinite(self.lower), self.lower, -1.0)
        hi = np.where(np.isfinite(self.upper), self.upper, 1.0)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DecisionPoint:
    """Result of an inner minimization."""

    x: np.ndarray
    value: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class SmoothnessConstants:
    """Curvature constants declared valid by the caller on its parameter region.

    ``rho`` is the strong-convexity modulus, ``beta1`` the Hessian upper bound
    and ``beta2`` the third-order mixed bound (zero when df/dx is linear in
    theta). The library never estimates these automatically.
    """

    rho: float
    beta1: float
    beta2: float = 0.0

    def __post_init__(self) -> None:
        if not (self.rho > 0.0 and np.isfinite(self.rho)):
            raise InvalidParameter(f"rho must be > 0, got {self.rho}")
        if self.rho > self.beta1:
            raise InvalidParameter(f"rho={self.rho} must not exceed beta1={self.beta1}")
        if self.beta2 < 0.0:
            raise InvalidParameter(f"beta2 must be >= 0, got {self.beta2}")


@dataclass(frozen=True)
class BoundCheck:
    regret: float
    bound: float
    holds: bool


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def fd_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: float = 1e-6,
    f_batch: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Central-difference gradient with per-coordinate scaled steps."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = step * (1.0 + np.abs(x))
    if f_batch is not None:
        pts = np.repeat(x[None, :], 2 * n, axis=0)
        for i in range(n):
            pts[2 * i, i] += h[i]
            pts[2 * i + 1, i] -= h[i]
        vals = np.asarray(f_batch(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteEvaluation("gradient stencil hit a non-finite value")
        return (vals[0::2] - vals[1::2]) / (2.0 * h)
    g = np.empty(n)
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(f"gradient stencil non-finite at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def _projected_gradient_norm(x, g, lower, upper) -> float:
    return float(np.linalg.norm(x - np.clip(x - g, lower, upper)))


# ---------------------------------------------------------------------------
# Box-constrained limited-memory quasi-Newton
# ---------------------------------------------------------------------------

_ARMIJO_C = 1e-4
_LBFGS_MEMORY = 10


def minimize(
    problem: ObjectiveProblem,
    theta: np.ndarray,
    x0: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    callback: Callable[[np.ndarray, float], None] | None = None,
) -> DecisionPoint:
    """Minimize f(., theta) over the box by projected limited-memory quasi-Newton.

    Gradients are central finite differences; search directions come from the
    two-loop L-BFGS recursion (memory 10) with gradient projection onto the
    box and Armijo backtracking (c = 1e-4, step halving). Convergence is
    declared when the projected-gradient norm drops below ``tol``. The
    objective value is non-increasing across accepted iterates.
    """
    if tol <= 0.0:
        raise InvalidParameter(f"tol must be > 0, got {tol}")
    theta = np.asarray(theta, dtype=float)
    lower, upper = problem.lower, problem.upper
    x = problem.clip(np.asarray(x0, dtype=float))

    def func(z: np.ndarray) -> float:
        v = float(problem.evaluate(z, theta))
        if not np.isfinite(v):
            raise NonFiniteEvaluation(f"objective non-finite at x={z} (problem {problem.label})")
        return v

    batch = None
    if problem.evaluate_batch is not None:
        def batch(pts: np.ndarray) -> np.ndarray:
            ths = np.repeat(theta[None, :], pts.shape[0], axis=0)
            return problem.evaluate_batch(pts, ths)

    def grad(z: np.ndarray) -> np.ndarray:
        return fd_gradient(func, z, step=problem.gradient_step, f_batch=batch)

    fx = func(x)
    g = grad(x)
    if callback is not None:
        callback(x, fx)
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    iterations = 0

    def line_search(direction: np.ndarray) -> tuple[np.ndarray, float] | None:
        # enumerate the halving candidates up front (their Armijo slopes do not
        # depend on f), then evaluate them, batched when the problem allows;
        # non-finite trial values are treated as +inf rather than fatal
        candidates: list[tuple[np.ndarray, float]] = []
        step = 1.0
        for _ in range(45):
            x_try = np.clip(x + step * direction, lower, upper)
            move = x_try - x
            slope = float(g @ move)
            if slope >= 0.0 or not np.any(move):
                break
            candidates.append((x_try, slope))
            step *= 0.5
        if batch is None:
            for x_try, slope in candidates:
                f_try = float(problem.evaluate(x_try, theta))
                if np.isfinite(f_try) and f_try <= fx + _ARMIJO_C * slope:
                    return x_try, f_try
            return None
        pos = 0
        while pos < len(candidates):
            chunk = candidates[pos : pos + 6]
            vals = np.asarray(batch(np.array([c[0] for c in chunk])), dtype=float)
            for (x_try, slope), f_try in zip(chunk, vals):
                if np.isfinite(f_try) and f_try <= fx + _ARMIJO_C * slope:
                    return x_try, float(f_try)
            pos += 6
        return None

    for _ in range(max_iter):
        if _projected_gradient_norm(x, g, lower, upper) <= tol:
            return DecisionPoint(x, fx, True, iterations)

        d = _lbfgs_direction(g, s_hist, y_hist)
        accepted = line_search(d)
        if accepted is None:
            accepted = line_search(-g)
        if accepted is None:
            # line search stalled: report convergence status at the current point
            return DecisionPoint(x, fx, _projected_gradient_norm(x, g, lower, upper) <= tol,
                                 iterations)

        x_new, f_new = accepted
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > _LBFGS_MEMORY:
                s_hist.pop(0)
                y_hist.pop(0)
        x, fx, g = x_new, f_new, g_new
        iterations += 1
        if callback is not None:
            callback(x, fx)

    return DecisionPoint(x, fx, _projected_gradient_norm(x, g, lower, upper) <= tol, iterations)


def _lbfgs_direction(g: np.ndarray, s_hist: Sequence[np.ndarray],
                     y_hist: Sequence[np.ndarray]) -> np.ndarray:
    q = -g.copy()
    if not s_hist:
        return q
    alphas = []
    rhos = [1.0 / float(s @ y) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s_last, y_last = s_hist[-1], y_hist[-1]
    q *= float(s_last @ y_last) / float(y_last @ y_last)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


# ---------------------------------------------------------------------------
# One-dimensional solver (golden section + Newton polish on the derivative)
# ---------------------------------------------------------------------------

_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def minimize_1d(
    g: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-8,
) -> float:
    """Scalar minimizer of g on [lo, hi] with |g'(x)| <= tol at the result.

    Golden-section narrows the bracket, then Newton steps on the central-FD
    derivative polish to the stationary point. Raises NoInteriorMinimum when
    the minimum sits on a bracket endpoint with a derivative pointing outward.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise InvalidParameter(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
    scale = 1.0 + max(abs(lo), abs(hi))

    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = float(g(x1)), float(g(x2))
    while (b - a) > 1e-9 * scale:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = float(g(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = float(g(x2))
    x = 0.5 * (a + b)

    def deriv(z: float, h: float) -> float:
        return (float(g(z + h)) - float(g(z - h))) / (2.0 * h)

    h = 1e-4 * (1.0 + abs(x))
    edge = 1e-7 * scale
    if x - lo < edge and deriv(lo + h, h) > tol:
        raise NoInteriorMinimum(f"minimum at lower bracket endpoint {lo}")
    if hi - x < edge and deriv(hi - h, h) < -tol:
        raise NoInteriorMinimum(f"minimum at upper bracket endpoint {hi}")

    # Newton steps on the FD derivative polish well past the golden-section
    # resolution; require one step before trusting |g'| <= tol so a quadratic
    # lands at the stationary point rather than at the tolerance boundary
    took_step = False
    for _ in range(50):
        h = 1e-4 * (1.0 + abs(x))
        d1 = deriv(x, h)
        if took_step and abs(d1) <= tol:
            return float(x)
        d2 = (float(g(x + h)) - 2.0 * float(g(x)) + float(g(x - h))) / (h * h)
        if not np.isfinite(d2) or d2 <= 0.0:
            break
        x_new = min(max(x - d1 / d2, lo), hi)
        if x_new == x:
            break
        x = x_new
        took_step = True
    return float(x)


# ---------------------------------------------------------------------------
# Inner solve dispatch and the deterministic regret bound
# ---------------------------------------------------------------------------


def solve_inner(problem: ObjectiveProblem, theta: np.ndarray, tol: float = 1e-8,
                max_iter: int = 500) -> DecisionPoint:
    """Exact inner minimization of f(., theta) for the harness and design code."""
    theta = np.asarray(theta, dtype=float)
    if problem.solver is not None:
        return problem.solver(theta, tol)
    return minimize(problem, theta, problem.start_point(), tol=tol, max_iter=max_iter)


def cross_derivative(
    problem: ObjectiveProblem,
    x: np.ndarray,
    theta: np.ndarray,
    fd: FdConfig = FdConfig(),
) -> np.ndarray:
    """Cross-derivative matrix at (x, theta), analytic when the problem has one."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.asarray(theta, dtype=float)
    if problem.analytic_cross_derivative is not None:
        d = np.asarray(problem.analytic_cross_derivative(x, theta), dtype=float)
        return d.reshape(problem.dim_x, problem.dim_theta)
    f_batch = problem.evaluate_batch
    return cross_derivative_matrix(problem.evaluate, x, theta, fd, f_batch=f_batch)


def verify_regret_bound(
    problem: ObjectiveProblem,
    constants: SmoothnessConstants,
    theta_star: np.ndarray,
    theta_hat: np.ndarray,
    fd: FdConfig = FdConfig(),
    solver_tol: float = 1e-9,
) -> BoundCheck:
    """Check the deterministic regret bound for one (theta_star, theta_hat) pair.

    regret = f(x*(theta_hat), theta*) - f(x*(theta*), theta*), and the bound is
    (4 beta1 / rho^2) * (||D (theta_hat - theta*)||^2 + (beta2^2 / 4)
    ||theta_hat - theta*||^4) with D evaluated at (x*(theta*), theta*). The
    constants are trusted on the caller-declared parameter region.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    sol_star = solve_inner(problem, theta_star, tol=solver_tol)
    sol_hat = solve_inner(problem, theta_hat, tol=solver_tol)
    value_at_hat = float(problem.evaluate(sol_hat.x, theta_star))
    regret = value_at_hat - sol_star.value

    d = cross_derivative(problem, sol_star.x, theta_star, fd)
    delta = theta_hat - theta_star
    quad = float(np.linalg.norm(d @ delta) ** 2)
    quart = 0.25 * constants.beta2**2 * float(np.linalg.norm(delta) ** 4)
    bound = 4.0 * constants.beta1 / constants.rho**2 * (quad + quart)
    return BoundCheck(regret=regret, bound=bound, holds=regret <= bound + 1e-9)
