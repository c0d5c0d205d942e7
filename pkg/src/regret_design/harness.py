"""Monte Carlo regret evaluation of estimate-then-optimize under a design.

Each replication draws a ground-truth parameter from the prior, simulates the
estimator's data-generating process under the allocation being evaluated,
re-optimizes against the estimate, and scores the value lost relative to the
oracle decision. Compared allocations share the truth draw and the underlying
data noise (common random numbers), which makes directional comparisons
stable at modest replication counts. Results are deterministic for a fixed
master seed regardless of worker thread count: every replication owns the
stream derived from its index and reduction happens in index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidParameter, SeparationDetected, TooManyDiscards
from .estimation import Allocation, LognormalGroupMeanModel, simulate_estimate
from .numerics import RngStream
from .problem import ObjectiveProblem, solve_inner
from .problems import pandemic as pandemic_mod

__all__ = [
    "RegretReport",
    "SweepResult",
    "compare_designs",
    "evaluate_regret",
    "regret_vs_budget_sweep",
    "trajectory_quantiles",
]

_Z95 = 1.96


@dataclass(frozen=True)
class RegretReport:
    """Mean regret with a 95% normal-approximation confidence half-width."""

    mean_regret: float
    ci_half_width: float
    replications: int
    discarded: int
    per_replication: np.ndarray | None = None


@dataclass(frozen=True)
class SweepResult:
    axis: tuple[int, ...]
    optimized: tuple[RegretReport, ...]
    uniform: tuple[RegretReport, ...]
    loglog_slope: float


def _thread_map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _summarize(samples: np.ndarray, discarded: int, keep: bool) -> RegretReport:
    n = samples.size
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1)) if n > 1 else 0.0
    return RegretReport(
        mean_regret=mean,
        ci_half_width=_Z95 * sd / np.sqrt(n),
        replications=n,
        discarded=discarded,
        per_replication=samples.copy() if keep else None,
    )


def compare_designs(
    problem: ObjectiveProblem,
    cov_model,
    prior,
    allocations: Mapping[str, Allocation],
    replications: int,
    stream: RngStream,
    threads: int = 1,
    solver_tol: float = 1e-8,
    keep_samples: bool = False,
) -> dict[str, RegretReport]:
    """Paired regret reports for several allocations under common random numbers.

    Per replication the truth draw, the oracle solve and the data-noise stream
    are shared by every allocation. A replication where any allocation's
    estimator fails (MLE separation) is discarded for all of them, preserving
    the pairing; more than 20% discards raises TooManyDiscards.
    """
    if len(allocations) < 2:
        raise InvalidParameter("a comparison needs at least two allocations")
    return _paired_regret(problem, cov_model, prior, allocations, replications, stream,
                          threads=threads, solver_tol=solver_tol, keep_samples=keep_samples)


def _paired_regret(
    problem: ObjectiveProblem,
    cov_model,
    prior,
    allocations: Mapping[str, Allocation],
    replications: int,
    stream: RngStream,
    threads: int = 1,
    solver_tol: float = 1e-8,
    keep_samples: bool = False,
) -> dict[str, RegretReport]:
    if replications < 2:
        raise InvalidParameter(f"replications must be >= 2, got {replications}")
    names = list(allocations.keys())

    def run(rep_index: int) -> dict[str, float] | None:
        rep = stream.child(rep_index)
        theta_star = prior.draw(rep.child(0).generator())
        star_sol = solve_inner(problem, theta_star, tol=solver_tol)
        values: dict[str, float] = {}
        for name in names:
            data_stream = rep.child(1)
            try:
                theta_hat = simulate_estimate(cov_model, allocations[name], theta_star,
                                              data_stream)
            except SeparationDetected:
                return None
            hat_sol = solve_inner(problem, theta_hat, tol=solver_tol)
            values[name] = float(problem.evaluate(hat_sol.x, theta_star))
        # the oracle value is the best value seen under theta_star, so a
        # re-optimized decision can never look better than the oracle
        f_star = min(star_sol.value, min(values.values()))
        return {name: values[name] - f_star for name in names}

    rows = _thread_map(run, range(replications), threads)
    kept = [row for row in rows if row is not None]
    discarded = replications - len(kept)
    if discarded > 0.2 * replications:
        raise TooManyDiscards(
            f"{discarded}/{replications} replications discarded; allocation is degenerate"
        )
    return {
        name: _summarize(np.array([row[name] for row in kept]), discarded, keep_samples)
        for name in names
    }


def evaluate_regret(
    problem: ObjectiveProblem,
    cov_model,
    alloc: Allocation,
    prior,
    replications: int,
    stream: RngStream,
    threads: int = 1,
    solver_tol: float = 1e-8,
    keep_samples: bool = False,
) -> RegretReport:
    """Monte Carlo regret of estimate-then-optimize under one allocation."""
    reports = _paired_regret(problem, cov_model, prior, {"allocation": alloc},
                             replications, stream, threads=threads,
                             solver_tol=solver_tol, keep_samples=keep_samples)
    return reports["allocation"]


def regret_vs_budget_sweep(
    problem: ObjectiveProblem,
    cov_model,
    prior,
    budgets: Sequence[int],
    replications: int,
    stream: RngStream,
    designer: Callable[[int, RngStream], Allocation],
    uniform: Callable[[int], Allocation],
    threads: int = 1,
    solver_tol: float = 1e-8,
) -> SweepResult:
    """Optimized-vs-uniform regret across budgets plus the log-log decay slope.

    ``designer(budget, stream)`` produces the optimized allocation for each
    budget; ``uniform(budget)`` the baseline. The slope is the least-squares
    fit of log mean regret against log budget for the optimized allocations.
    """
    budgets = [int(b) for b in budgets]
    if len(budgets) < 2:
        raise InvalidParameter("a sweep needs at least two budget values")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise InvalidParameter("budgets must be strictly increasing")

    optimized: list[RegretReport] = []
    baseline: list[RegretReport] = []
    for i, budget in enumerate(budgets):
        opt_alloc = designer(budget, stream.child(2 * i))
        allocs = {"optimized": opt_alloc, "uniform": uniform(budget)}
        reports = compare_designs(problem, cov_model, prior, allocs, replications,
                                  stream.child(2 * i + 1), threads=threads,
                                  solver_tol=solver_tol)
        optimized.append(reports["optimized"])
        baseline.append(reports["uniform"])

    log_n = np.log(np.asarray(budgets, dtype=float))
    log_regret = np.log(np.maximum([r.mean_regret for r in optimized], 1e-300))
    slope = float(np.polyfit(log_n, log_regret, 1)[0])
    return SweepResult(tuple(budgets), tuple(optimized), tuple(baseline), slope)


def trajectory_quantiles(
    params: "pandemic_mod.SirParams",
    allocations: Mapping[str, Allocation],
    prior,
    draws: int,
    stream: RngStream,
    estimator=None,
    solver_tol: float = 1e-5,
    threads: int = 1,
) -> dict[str, dict[str, np.ndarray]]:
    """Per-day quartile bands of cumulative infections under each allocation.

    For every prior draw: simulate contact traces under each allocation,
    estimate the contact matrix, optimize the testing split against the
    estimate, then run the true-parameter epidemic under that split. Returns
    {allocation: {"q25"|"q50"|"q75": (horizon + 1,) arrays}}.
    """
    if draws < 4:
        raise InvalidParameter(f"quantile bands need at least 4 draws, got {draws}")
    if estimator is None:
        estimator = LognormalGroupMeanModel(params.n_groups)
    names = list(allocations.keys())

    def run(rep_index: int) -> dict[str, np.ndarray]:
        rep = stream.child(rep_index)
        theta_star = prior.draw(rep.child(0).generator())
        curves: dict[str, np.ndarray] = {}
        for name in names:
            theta_hat = simulate_estimate(estimator, allocations[name], theta_star,
                                          rep.child(1))
            sol = pandemic_mod.solve_testing_split(params, theta_hat, tol=solver_tol)
            curves[name] = pandemic_mod.cumulative_infection_curve(params, sol.x, theta_star)
        return curves

    rows = _thread_map(run, range(draws), threads)
    out: dict[str, dict[str, np.ndarray]] = {}
    for name in names:
        stacked = np.stack([row[name] for row in rows])
        q25, q50, q75 = np.percentile(stacked, [25.0, 50.0, 75.0], axis=0)
        out[name] = {"q25": q25, "q50": q50, "q75": q75}
    return out
