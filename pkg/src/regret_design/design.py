"""Regret-bound design objective and allocation optimizers.

The design criterion is the trace of D Sigma D^T averaged over draws from a
parameter prior, where D is the cross-derivative at each draw's inner optimum
and Sigma the estimator covariance induced by a candidate allocation. This
module computes the bound terms, evaluates the criterion, and optimizes
allocations three ways: a closed form for diagonal models, a closed-form
count rule for grouped traces, and random search over integer compositions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BudgetTooSmall,
    DegenerateDirection,
    DimensionMismatch,
    InfeasibleFloor,
    InvalidParameter,
    NoFeasibleCandidate,
    RegretDesignError,
    SingularInformation,
    ZeroCount,
)
from .estimation import Allocation, covariance
from .numerics import FdConfig, RngStream, symmetric_eigenvalues
from .problem import ObjectiveProblem, cross_derivative, solve_inner

__all__ = [
    "BoundReport",
    "DesignObjective",
    "bayesian_design_objective",
    "bound_terms",
    "c_optimal_allocation",
    "kkt_group_allocation",
    "random_search",
    "round_allocation",
    "uniform_allocation",
]


# ---------------------------------------------------------------------------
# Bound terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """The three allocation-dependent terms of the high-probability regret bound.

    ``trace_term`` is Tr(M), ``frobenius_term`` 2 sqrt(Tr(M^2) log n) and
    ``spectral_term`` 2 ||M||_2 log n for M = D Sigma D^T, where Sigma is the
    estimator covariance at the realized budget and n enters only through the
    log factors. Constant prefactors are allocation-independent and excluded.
    """

    trace_term: float
    frobenius_term: float
    spectral_term: float
    total: float


def _trace_form(d: np.ndarray, sigma: np.ndarray) -> float:
    return float(((d @ sigma) * d).sum())


def bound_terms(d: np.ndarray, sigma: np.ndarray, n: float) -> BoundReport:
    """Compute the computable regret-bound terms for cross-derivative ``d``.

    ``sigma`` must be the symmetric PSD covariance of (theta_hat - theta) and
    ``n`` >= 1 the sample size feeding the log factors (log 1 = 0 makes the
    tail terms vanish).
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {sigma.shape}")
    if d.shape[1] != sigma.shape[0]:
        raise DimensionMismatch(
            f"cross-derivative has {d.shape[1]} columns, covariance is {sigma.shape[0]}x{sigma.shape[0]}"
        )
    if n < 1.0:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    m = d @ sigma @ d.T
    m = 0.5 * (m + m.T)
    eigs = symmetric_eigenvalues(m)
    trace = float(np.trace(m))
    log_n = float(np.log(n))
    frob = 2.0 * float(np.sqrt(max(np.sum(m * m), 0.0) * log_n))
    spectral = 2.0 * float(eigs[0]) * log_n if eigs.size else 0.0
    return BoundReport(trace, frob, spectral, trace + frob + spectral)


# ---------------------------------------------------------------------------
# Bayesian design objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorDraw:
    theta: np.ndarray
    x_star: np.ndarray
    d_matrix: np.ndarray


class DesignObjective:
    """Prior-averaged trace criterion with a frozen draw set.

    The constructor materializes ``prior_draws`` draws of theta, solves the
    inner problem once per draw, and caches the cross-derivative there: the
    expensive work is independent of the candidate allocation, and reusing the
    same draw set across candidates gives common random numbers, so candidate
    rankings are deterministic. Draws whose inner solve fails are rejected,
    resampled and counted in ``rejected``.
    """

    def __init__(self, problem: ObjectiveProblem, cov_model, prior, prior_draws: int,
                 budget: int, stream: RngStream, fd: FdConfig = FdConfig(),
                 solver_tol: float = 1e-8):
        if prior_draws < 1:
            raise InvalidParameter(f"prior_draws must be >= 1, got {prior_draws}")
        if budget < 1:
            raise InvalidParameter(f"budget must be >= 1, got {budget}")
        self.problem = problem
        self.cov_model = cov_model
        self.prior = prior
        self.budget = int(budget)
        self.fd = fd
        rng = stream.generator()
        draws: list[PriorDraw] = []
        rejected = 0
        while len(draws) < prior_draws:
            theta = prior.draw(rng)
            try:
                sol = solve_inner(problem, theta, tol=solver_tol)
                d = cross_derivative(problem, sol.x, theta, fd)
            except RegretDesignError:
                rejected += 1
                if rejected > 10 * prior_draws + 100:
                    raise NoFeasibleCandidate(
                        f"inner solve failed for {rejected} prior draws in a row"
                    )
                continue
            draws.append(PriorDraw(theta=theta, x_star=sol.x, d_matrix=d))
        self.draws: tuple[PriorDraw, ...] = tuple(draws)
        self.rejected = rejected

    def mean_squared_sensitivity(self) -> np.ndarray:
        """Prior mean of the squared cross-derivative, per theta component."""
        acc = np.zeros(self.problem.dim_theta)
        for draw in self.draws:
            acc += (draw.d_matrix**2).sum(axis=0)
        return acc / len(self.draws)


def bayesian_design_objective(obj: DesignObjective, alloc: Allocation) -> float:
    """Average over the frozen prior draws of Tr(D Sigma(alloc, theta) D^T)."""
    total = 0.0
    for draw in obj.draws:
        sigma = covariance(obj.cov_model, alloc, draw.theta)
        total += _trace_form(draw.d_matrix, sigma)
    return total / len(obj.draws)


# ---------------------------------------------------------------------------
# Closed-form allocations
# ---------------------------------------------------------------------------


def c_optimal_allocation(d: Sequence[float], sigma: Sequence[float]) -> Allocation:
    """Fractional weights minimizing sum_i d_i^2 sigma_i^2 / w_i on the simplex.

    The optimum puts weight proportional to |d_i| sigma_i (the criterion
    depends on d only through d_i^2, so signs are irrelevant).
    """
    d = np.asarray(d, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if d.shape != sigma.shape or d.ndim != 1:
        raise DimensionMismatch("d and sigma must be equal-length vectors")
    if np.any(sigma <= 0.0):
        raise InvalidParameter("sigma entries must be > 0")
    mass = np.abs(d) * sigma
    denom = mass.sum()
    if denom <= 0.0:
        raise DegenerateDirection("all |d_i| sigma_i vanish; any allocation is optimal")
    return Allocation.from_weights(mass / denom, range(d.size), total=1)


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def kkt_group_allocation(rho: Sequence[float], total: int, stream: RngStream) -> Allocation:
    """Integer counts minimizing sum_i rho_i^2 / M_i subject to sum M_i = total.

    The relaxed optimum is M_i = total * rho_i / sum(rho); the first k-1
    counts are rounded half-up and the last takes the slack. When the last
    count lands at zero it is raised to one and one of the earlier counts is
    decremented: the donor is the choice that increases the criterion least,
    with a fair coin (drawn from ``stream``) breaking exact ties, as happens
    whenever the leading sensitivities are equal. Any other zero count is
    raised by taking from the current largest.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0) or not np.all(np.isfinite(rho)):
        raise InvalidParameter("rho entries must be finite and >= 0")
    if rho.sum() <= 0.0:
        raise DegenerateDirection("all group sensitivities vanish")
    k = rho.size
    total = int(total)
    if total < k:
        raise BudgetTooSmall(f"budget {total} below the {k} groups needing one trace each")

    frac = total * rho / rho.sum()
    counts = np.array([_round_half_up(frac[i]) for i in range(k - 1)] + [0], dtype=int)
    counts[k - 1] = total - counts[: k - 1].sum()

    rng = stream.generator()
    while counts[k - 1] < 1:
        donors = [i for i in range(k - 1) if counts[i] > 1]
        # criterion increase from M -> M - 1 is rho^2 / (M (M - 1))
        deltas = np.array([rho[i] ** 2 / (counts[i] * (counts[i] - 1.0)) for i in donors])
        best = deltas.min()
        tied = [donors[j] for j in range(len(donors)) if deltas[j] <= best * (1.0 + 1e-12)]
        pick = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
        counts[pick] -= 1
        counts[k - 1] += 1
    for i in range(k - 1):
        while counts[i] < 1:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1
    return Allocation.from_counts(counts, range(k))


def round_allocation(fractional: Allocation, total: int, min_per_point: int = 0) -> Allocation:
    """Largest-remainder rounding of total * w_i with a per-point floor.

    After rounding, any count below the floor is raised to it by decrementing
    the currently largest counts; the result sums exactly to ``total``.
    """
    weights = fractional.weights
    if fractional.is_integer:
        weights = weights / weights.sum()
    n_points = weights.size
    total = int(total)
    if total < min_per_point * n_points:
        raise InfeasibleFloor(
            f"budget {total} cannot give {min_per_point} to each of {n_points} points"
        )
    raw = total * weights
    counts = np.floor(raw).astype(int)
    remainder = raw - counts
    leftover = total - int(counts.sum())
    order = np.lexsort((np.arange(n_points), -remainder))
    for idx in order[:leftover]:
        counts[idx] += 1
    while np.any(counts < min_per_point):
        short = int(np.argmin(counts))
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[short] += 1
    return Allocation(counts.astype(float), fractional.design_points, total)


def uniform_allocation(design_points: Sequence, total: int, min_per_point: int = 0) -> Allocation:
    """Equal split of the budget, remainders to the lowest-index points."""
    points = tuple(design_points)
    frac = Allocation.from_weights(np.full(len(points), 1.0 / len(points)), points)
    return round_allocation(frac, total, min_per_point)


# ---------------------------------------------------------------------------
# Random search over integer compositions
# ---------------------------------------------------------------------------


def _sample_compositions(rng: np.random.Generator, total: int, k: int,
                         n_samples: int) -> np.ndarray:
    """Uniform samples from the integer simplex via stars and bars."""
    out = np.empty((n_samples, k), dtype=np.int64)
    slots = total + k - 1
    for row in range(n_samples):
        bars = np.sort(rng.choice(slots, size=k - 1, replace=False))
        prev = -1
        for j, b in enumerate(bars):
            out[row, j] = b - prev - 1
            prev = b
        out[row, k - 1] = slots - 1 - prev
    return out


def _candidate_scores(obj: DesignObjective, counts: np.ndarray) -> np.ndarray:
    """Design-objective values for a batch of integer count vectors.

    Vectorized closed forms cover the shipped model kinds; anything else falls
    back to scoring each candidate through the public objective. Infeasible
    candidates (zero required counts, singular information) score +inf.
    """
    kind = getattr(obj.cov_model, "kind", None)
    counts_f = counts.astype(float)
    if kind == "diagonal_mean":
        weight = obj.mean_squared_sensitivity() * obj.cov_model.sigma**2
        with np.errstate(divide="ignore"):
            return np.where(counts_f > 0, weight / counts_f, np.inf).sum(axis=1)
    if kind == "lognormal_group_mean":
        n = obj.cov_model.n_groups
        per_column = np.zeros(n)
        for draw in obj.draws:
            theta = draw.theta.reshape(n, n)
            dsq = (draw.d_matrix**2).sum(axis=0).reshape(n, n)
            var = (np.e - 1.0) * theta**2
            per_column += (dsq * var).sum(axis=0)
        per_column /= len(obj.draws)
        with np.errstate(divide="ignore"):
            return np.where(counts_f > 0, per_column / counts_f, np.inf).sum(axis=1)
    if kind == "logistic_mle":
        prices = obj.cov_model.prices
        scores = np.zeros(counts.shape[0])
        from .estimation import _conversion  # shared logistic kernel

        for draw in obj.draws:
            c = _conversion(prices, draw.theta)
            w = c * (1.0 - c)
            m0 = counts_f @ w
            m1 = counts_f @ (w * prices)
            m2 = counts_f @ (w * prices**2)
            det = m0 * m2 - m1**2
            d0, d1 = draw.d_matrix.ravel()
            quad = d0**2 * m2 - 2.0 * d0 * d1 * m1 + d1**2 * m0
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(det > 1e-12 * np.maximum(m0 * m2, 1e-300), quad / det, np.inf)
            scores += val
        return scores / len(obj.draws)

    scores = np.empty(counts.shape[0])
    for row in range(counts.shape[0]):
        alloc = Allocation.from_counts(counts[row], getattr(obj.cov_model, "design_points", None))
        try:
            scores[row] = bayesian_design_objective(obj, alloc)
        except (SingularInformation, ZeroCount):
            scores[row] = np.inf
    return scores


def random_search(obj: DesignObjective, n_candidates: int, stream: RngStream) -> Allocation:
    """Best of ``n_candidates`` uniformly sampled integer allocations.

    Candidates come from the uniform distribution over compositions of the
    budget across the model's design points; allocations with singular
    information are skipped. Ties keep the earliest candidate, so results are
    reproducible for a fixed stream.
    """
    if n_candidates < 1:
        raise InvalidParameter(f"n_candidates must be >= 1, got {n_candidates}")
    points = obj.cov_model.design_points
    rng = stream.generator()
    counts = _sample_compositions(rng, obj.budget, len(points), n_candidates)
    scores = _candidate_scores(obj, counts)
    best = int(np.argmin(scores))
    if not np.isfinite(scores[best]):
        raise NoFeasibleCandidate(
            f"all {n_candidates} sampled allocations were singular or infeasible"
        )
    return Allocation.from_counts(counts[best], points)
