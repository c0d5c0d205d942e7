"""Multi-group SIR testing control driven by an uncertain contact matrix.

A discrete-time (one day per step) SIR model couples social groups through a
contact matrix theta (theta_kj = contacts of group k per infected of group j
per day, scaled by a global transmissibility kappa). The decision is how to
split a fixed daily testing capacity across groups; the objective is the
cumulative number ever infected over the horizon. To keep the capacity
constraint implicit, decisions are stick-breaking proportions y in [0, 1]^2:
y_1 is the share of capacity given to group 1, y_2 the share of the remainder
given to group 2, and group 3 receives what is left.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..design import kkt_group_allocation
from ..errors import InvalidParameter, UnstableStep
from ..estimation import Allocation
from ..numerics import FdConfig, RngStream, cross_derivative_matrix
from ..problem import DecisionPoint, ObjectiveProblem, minimize

__all__ = [
    "SirParams",
    "SirState",
    "decode_testing_rates",
    "default_params",
    "design_allocation",
    "make_problem",
    "mean_group_sensitivity",
    "pandemic_group_sensitivity",
    "pandemic_objective",
    "sir_step",
    "solve_testing_split",
    "cumulative_infection_curve",
]

TRACE_VARIANCE_FACTOR = float(np.e - 1.0)  # variance of Lognormal(log t - 1/2, 1) is (e-1) t^2


@dataclass(frozen=True)
class SirParams:
    """Epidemic model parameters.

    ``contact_matrix`` holds theta in persons/day, ``kappa`` the per-contact
    transmissibility, ``gamma`` the recovery rate (1/day), ``population`` the
    group sizes, ``testing_capacity`` the daily test budget and
    ``initial_infected`` the day-0 seeding.
    """

    contact_matrix: np.ndarray
    kappa: float
    gamma: float
    population: np.ndarray
    testing_capacity: float
    horizon: int = 100
    initial_infected: np.ndarray | None = None

    def __post_init__(self) -> None:
        theta = np.asarray(self.contact_matrix, dtype=float).copy()
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise InvalidParameter(f"contact matrix must be square, got shape {theta.shape}")
        if np.any(theta < 0.0) or not np.all(np.isfinite(theta)):
            raise InvalidParameter("contact matrix entries must be finite and >= 0")
        n = theta.shape[0]
        pop = np.asarray(self.population, dtype=float).copy()
        if pop.shape != (n,) or np.any(pop <= 0.0):
            raise InvalidParameter("population must be positive per group")
        seed = self.initial_infected
        seed = np.zeros(n) if seed is None else np.asarray(seed, dtype=float).copy()
        if seed.shape != (n,) or np.any(seed < 0.0):
            raise InvalidParameter("initial_infected must be a nonnegative per-group vector")
        if seed.sum() < 1.0:
            raise InvalidParameter("at least one initial infection is required")
        if self.kappa < 0.0 or self.gamma < 0.0 or self.testing_capacity < 0.0:
            raise InvalidParameter("kappa, gamma and testing_capacity must be >= 0")
        if int(self.horizon) < 1:
            raise InvalidParameter(f"horizon must be >= 1, got {self.horizon}")
        for name, arr in (("contact_matrix", theta), ("population", pop),
                          ("initial_infected", seed)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_groups(self) -> int:
        return self.contact_matrix.shape[0]

    def with_contact_matrix(self, theta) -> "SirParams":
        return replace(self, contact_matrix=np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class SirState:
    """Per-group compartment counts; S + I + R is conserved by every step."""

    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    clamped: bool = False

    def __post_init__(self) -> None:
        for name in ("S", "I", "R"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def default_params() -> SirParams:
    """Default three-group outbreak: two high-contact groups, one isolated."""
    return SirParams(
        contact_matrix=np.array([[12.0, 10.0, 1.0], [10.0, 8.0, 1.0], [1.0, 1.0, 1.0]]),
        kappa=1.0 / 105.0,
        gamma=0.1,
        population=np.array([1000.0, 1000.0, 1000.0]),
        testing_capacity=100.0,
        horizon=100,
        initial_infected=np.array([0.0, 1.0, 0.0]),
    )


def initial_state(params: SirParams) -> SirState:
    seed = params.initial_infected
    return SirState(S=params.population - seed, I=seed, R=np.zeros(params.n_groups))


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


def _check_rates(params: SirParams, rates: np.ndarray) -> None:
    # negative rates are tolerated: derivative stencils probe the smooth
    # extension of the dynamics just outside the feasible boundary
    if np.any(params.gamma + rates > 1.0 + 1e-12):
        worst = float(np.max(params.gamma + rates))
        raise UnstableStep(
            f"gamma + testing rate reaches {worst:.3f} > 1; unit time step would overshoot"
        )


def sir_step(state: SirState, params: SirParams, testing_rates: np.ndarray,
             contact_matrix: np.ndarray | None = None) -> SirState:
    """Advance the epidemic by one day under per-group testing rates.

    New infections in group k are S_k * sum_j beta_kj I_j / N_k with
    beta = kappa * theta, clamped at S_k (clamping sets the ``clamped`` flag
    on the returned state). Removal moves (gamma + x_k) I_k into R.
    """
    x = np.asarray(testing_rates, dtype=float)
    _check_rates(params, x)
    theta = params.contact_matrix if contact_matrix is None else np.asarray(contact_matrix, float)
    beta = params.kappa * theta
    force = beta @ state.I
    pressure = state.S * force / params.population
    new_inf = np.minimum(pressure, state.S)
    clamped = bool(np.any(pressure > state.S))
    removal = (params.gamma + x) * state.I
    return SirState(
        S=state.S - new_inf,
        I=state.I + new_inf - removal,
        R=state.R + removal,
        clamped=clamped,
    )


def _batch_cumulative(params: SirParams, rates: np.ndarray, beta: np.ndarray,
                      record_curves: bool = False) -> np.ndarray:
    """Cumulative infections for a batch of (rates, beta) scenarios.

    ``rates`` is (m, n) and ``beta`` either (n, n) shared or (m, n, n).
    Returns the final cumulative count (m,) or, with ``record_curves``, the
    whole per-day curve (m, horizon + 1).
    """
    m, n = rates.shape
    _check_rates(params, rates)
    pop = params.population
    seed = params.initial_infected
    s = np.tile(pop - seed, (m, 1))
    i = np.tile(seed, (m, 1))
    removal_rate = params.gamma + rates
    shared = beta.ndim == 2
    curves = np.empty((m, params.horizon + 1)) if record_curves else None
    if curves is not None:
        curves[:, 0] = (pop - s).sum(axis=1)
    for t in range(params.horizon):
        force = i @ beta.T if shared else np.einsum("mkj,mj->mk", beta, i)
        new_inf = np.minimum(s * force / pop, s)
        s = s - new_inf
        i = i + new_inf - removal_rate * i
        if curves is not None:
            curves[:, t + 1] = (pop - s).sum(axis=1)
    if curves is not None:
        return curves
    return (pop - s).sum(axis=1)


def decode_testing_rates(params: SirParams, y: np.ndarray) -> np.ndarray:
    """Map stick-breaking shares y in [0, 1]^(n-1) to per-group testing rates."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    n = params.n_groups
    if y.shape != (n - 1,):
        raise InvalidParameter(f"expected {n - 1} share coordinates, got shape {y.shape}")
    tests = np.empty(n)
    remaining = params.testing_capacity
    for k in range(n - 1):
        tests[k] = y[k] * remaining
        remaining -= tests[k]
    tests[n - 1] = remaining
    return tests / params.population


def _decode_batch(params: SirParams, ys: np.ndarray) -> np.ndarray:
    ys = np.clip(ys, 0.0, 1.0)
    m = ys.shape[0]
    n = params.n_groups
    tests = np.empty((m, n))
    remaining = np.full(m, params.testing_capacity)
    for k in range(n - 1):
        tests[:, k] = ys[:, k] * remaining
        remaining = remaining - tests[:, k]
    tests[:, n - 1] = remaining
    return tests / params.population


def pandemic_objective(params: SirParams, y: np.ndarray,
                       theta: np.ndarray | None = None) -> float:
    """Cumulative infections over the horizon for testing shares y.

    ``theta`` (flattened or square) overrides the params' contact matrix,
    which is how prior draws enter the objective.
    """
    rates = decode_testing_rates(params, y)
    n = params.n_groups
    mat = params.contact_matrix if theta is None else np.asarray(theta, float).reshape(n, n)
    return float(_batch_cumulative(params, rates[None, :], params.kappa * mat)[0])


def cumulative_infection_curve(params: SirParams, y: np.ndarray,
                               theta: np.ndarray | None = None) -> np.ndarray:
    """Per-day cumulative infections (horizon + 1 values, day 0 first)."""
    rates = decode_testing_rates(params, y)
    n = params.n_groups
    mat = params.contact_matrix if theta is None else np.asarray(theta, float).reshape(n, n)
    return _batch_cumulative(params, rates[None, :], params.kappa * mat,
                             record_curves=True)[0]


# ---------------------------------------------------------------------------
# Inner solver: vectorized grid screen + quasi-Newton polish
# ---------------------------------------------------------------------------

_GRID_LEVELS = (21, 17, 17)


def _evaluate_grid(params: SirParams, beta: np.ndarray, centers: np.ndarray,
                   half_width: float, points: int) -> tuple[np.ndarray, float]:
    axes = [
        np.clip(np.linspace(c - half_width, c + half_width, points), 0.0, 1.0)
        for c in centers
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    ys = np.column_stack([m.ravel() for m in mesh])
    vals = _batch_cumulative(params, _decode_batch(params, ys), beta)
    best = int(np.argmin(vals))
    return ys[best], float(vals[best])


def solve_testing_split(params: SirParams, theta: np.ndarray | None = None,
                        tol: float = 1e-5) -> DecisionPoint:
    """Globally screened minimizer of the testing-share objective.

    A 21x21 grid over the unit square locates the basin (the objective is not
    proven convex in the shares), two nested refinements narrow it, and a
    box-constrained quasi-Newton polish finishes. The returned value never
    exceeds the best point of the initial 21x21 grid.
    """
    n = params.n_groups
    mat = params.contact_matrix if theta is None else np.asarray(theta, float).reshape(n, n)
    beta = params.kappa * mat
    y, best = _evaluate_grid(params, beta, np.full(n - 1, 0.5), 0.5, _GRID_LEVELS[0])
    width = 0.5 * 2.0 / (_GRID_LEVELS[0] - 1)
    for points in _GRID_LEVELS[1:]:
        y, best = _evaluate_grid(params, beta, y, width, points)
        width = width * 2.0 / (points - 1)

    problem = make_problem(params, with_solver=False)
    theta_flat = mat.ravel()
    polished = minimize(problem, theta_flat, y, tol=max(tol, 1e-6), max_iter=60)
    if polished.value <= best:
        return polished
    return DecisionPoint(y, best, polished.converged, polished.iterations)


def make_problem(params: SirParams, with_solver: bool = True) -> ObjectiveProblem:
    n = params.n_groups

    def evaluate(y: np.ndarray, theta: np.ndarray) -> float:
        return pandemic_objective(params, y, theta)

    def evaluate_batch(ys: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        betas = params.kappa * thetas.reshape(-1, n, n)
        return _batch_cumulative(params, _decode_batch(params, ys), betas)

    problem = ObjectiveProblem(
        dim_x=n - 1,
        dim_theta=n * n,
        evaluate=evaluate,
        lower=np.zeros(n - 1),
        upper=np.ones(n - 1),
        label="pandemic",
        evaluate_batch=evaluate_batch,
        default_start=np.full(n - 1, 0.5),
        gradient_step=1e-5,
    )
    if with_solver:
        solver = lambda theta, tol: solve_testing_split(params, theta, tol)
        problem = replace(problem, solver=solver)
    return problem


# ---------------------------------------------------------------------------
# Contact-trace design
# ---------------------------------------------------------------------------


def pandemic_group_sensitivity(params: SirParams, theta: np.ndarray, y_star: np.ndarray,
                               fd: FdConfig = FdConfig()) -> np.ndarray:
    """Per-group design sensitivities rho at the optimal testing split.

    rho_j^2 sums, over decision coordinates l and observed groups k, the
    squared mixed partial (d^2 f / dx_l dtheta_kj)^2 times the per-trace
    variance (e - 1) theta_kj^2, so the trace criterion separates as
    sum_j rho_j^2 / M_j over the traced groups. Derivatives are taken in raw
    per-group testing rates (one coordinate per group): unlike stick-breaking
    shares, that parameterization treats groups symmetrically, so relabeling
    two identical groups swaps their sensitivities exactly.
    """
    n = params.n_groups
    theta_mat = np.asarray(theta, dtype=float).reshape(n, n)
    theta_flat = theta_mat.ravel()
    rates = decode_testing_rates(params, np.asarray(y_star, dtype=float))

    def f_raw(x: np.ndarray, t: np.ndarray) -> float:
        beta = params.kappa * np.asarray(t, dtype=float).reshape(n, n)
        return float(_batch_cumulative(params, np.asarray(x, float)[None, :], beta)[0])

    def f_batch(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        betas = params.kappa * ts.reshape(-1, n, n)
        return _batch_cumulative(params, xs, betas)

    d = cross_derivative_matrix(f_raw, rates, theta_flat, fd, f_batch=f_batch)
    var = TRACE_VARIANCE_FACTOR * theta_mat**2
    dsq = (d**2).sum(axis=0).reshape(n, n)
    rho_sq = (dsq * var).sum(axis=0)
    return np.sqrt(rho_sq)


def mean_group_sensitivity(params: SirParams, prior, prior_draws: int, stream: RngStream,
                           fd: FdConfig = FdConfig(), solver_tol: float = 1e-5) -> np.ndarray:
    """Root-mean-square of the per-group sensitivities over prior draws.

    This is the budget-independent half of the design: drawing theta, solving
    the testing split, and averaging rho^2 so that sum_j rho_bar_j^2 / M_j
    equals the prior-averaged trace criterion for any count vector M.
    """
    if prior_draws < 1:
        raise InvalidParameter(f"prior_draws must be >= 1, got {prior_draws}")
    rng = stream.generator()
    rho_sq = np.zeros(params.n_groups)
    for _ in range(prior_draws):
        theta = prior.draw(rng)
        sol = solve_testing_split(params, theta, tol=solver_tol)
        rho_sq += pandemic_group_sensitivity(params, theta, sol.x, fd) ** 2
    return np.sqrt(rho_sq / prior_draws)


def design_allocation(params: SirParams, prior, budget: int, prior_draws: int,
                      stream: RngStream, fd: FdConfig = FdConfig(),
                      solver_tol: float = 1e-5) -> Allocation:
    """Trace allocation minimizing the prior-averaged regret-bound objective.

    Draws theta from the prior, solves the testing split per draw, averages
    the squared group sensitivities, and applies the closed-form count rule.
    """
    rho_bar = mean_group_sensitivity(params, prior, prior_draws, stream.child(0),
                                     fd=fd, solver_tol=solver_tol)
    return kkt_group_allocation(rho_bar, budget, stream.child(1))
