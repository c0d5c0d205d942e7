"""Estimator covariance models and their data-generating simulators.

Each model maps an experiment :class:`Allocation` to the covariance of
(theta_hat - theta) and can simulate one draw of theta_hat through the actual
data-generating process. Three kinds are shipped:

* ``diagonal_mean``: componentwise sample means of independent normals,
  covariance diag(sigma_i^2 / N_i).
* ``logistic_mle``: conversions at allocated prices fit by maximum likelihood,
  asymptotic covariance (X^T W X)^{-1}.
* ``lognormal_group_mean``: per-group contact-trace means with Lognormal
  (log theta - 1/2, 1) observations, covariance diag((e - 1) theta^2 / M_j).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    InvalidParameter,
    RankDeficient,
    SeparationDetected,
    SingularInformation,
    ZeroCount,
)
from .numerics import RngStream

__all__ = [
    "Allocation",
    "DiagonalMeanModel",
    "FitResult",
    "LogisticMleModel",
    "LognormalGroupMeanModel",
    "covariance",
    "fit_logistic_mle",
    "simulate_estimate",
]


# ---------------------------------------------------------------------------
# Allocations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Allocation:
    """Nonnegative weights over design points under a total budget.

    ``weights`` is either a vector of integer counts summing to ``total`` or a
    fractional vector summing to one. ``design_points`` carries one descriptor
    per weight (a component index, a price value, or a group index).
    """

    weights: np.ndarray
    design_points: tuple
    total: int

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).copy()
        pts = tuple(self.design_points)
        if w.ndim != 1 or w.size != len(pts):
            raise InvalidParameter(
                f"{w.size} weights for {len(pts)} design points"
            )
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise InvalidParameter("allocation weights must be finite and >= 0")
        total = int(self.total)
        if total < 0:
            raise InvalidParameter(f"total budget must be >= 0, got {total}")
        integral = bool(np.all(w == np.round(w)))
        if integral:
            if int(round(w.sum())) != total:
                raise InvalidParameter(
                    f"integer counts sum to {int(w.sum())}, expected total {total}"
                )
        elif abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"fractional weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "design_points", pts)
        object.__setattr__(self, "total", total)
        object.__setattr__(self, "_integral", integral)

    @classmethod
    def from_counts(cls, counts: Sequence[int], design_points: Sequence | None = None) -> "Allocation":
        counts = np.asarray(counts, dtype=float)
        if design_points is None:
            design_points = range(counts.size)
        return cls(counts, tuple(design_points), int(round(counts.sum())))

    @classmethod
    def from_weights(cls, weights: Sequence[float], design_points: Sequence | None = None,
                     total: int = 1) -> "Allocation":
        weights = np.asarray(weights, dtype=float)
        if design_points is None:
            design_points = range(weights.size)
        return cls(weights, tuple(design_points), total)

    @property
    def is_integer(self) -> bool:
        return self._integral  # type: ignore[attr-defined]

    def counts(self) -> np.ndarray:
        """Integer counts; raises for fractional allocations."""
        if not self.is_integer:
            raise InvalidParameter("allocation is fractional, integer counts unavailable")
        return self.weights.astype(int)

    def effective_counts(self) -> np.ndarray:
        """Real-valued per-point sample counts (weights * total when fractional)."""
        if self.is_integer:
            return self.weights.copy()
        return self.weights * self.total


# ---------------------------------------------------------------------------
# Logistic regression by Newton-Raphson
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    converged: bool
    iterations: int
    info_matrix: np.ndarray


_SEPARATION_NORM = 50.0
_MLE_GRAD_TOL = 1e-10
_MLE_MAX_ITER = 100


def _conversion(prices: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """P(convert | price) = 1 / (1 + exp(theta_0 + theta_1 x)), overflow-safe."""
    z = theta[0] + theta[1] * prices
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def fit_logistic_mle(prices: Sequence[float], conversions: Sequence[int]) -> FitResult:
    """Maximum likelihood fit of the two-parameter logistic conversion model.

    Newton-Raphson on the log-likelihood with step-halving; converged when the
    score norm falls below 1e-10. Iterates whose norm exceeds 50 indicate
    (quasi-)complete separation, where no finite MLE exists.
    """
    x = np.asarray(prices, dtype=float)
    y = np.asarray(conversions, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise InvalidParameter("prices and conversions must be equal-length vectors (>= 2)")
    if np.unique(x).size < 2:
        raise RankDeficient("all prices identical: slope is not identifiable")
    if y.min() == y.max():
        raise SeparationDetected("every outcome identical: no finite MLE exists")

    z = np.column_stack([np.ones_like(x), x])
    theta = np.zeros(2)

    def loglik(th: np.ndarray) -> float:
        c = _conversion(x, th)
        eps = 1e-300
        return float(y @ np.log(c + eps) + (1.0 - y) @ np.log(1.0 - c + eps))

    ll = loglik(theta)
    for it in range(1, _MLE_MAX_ITER + 1):
        c = _conversion(x, theta)
        score = z.T @ (c - y)
        if np.linalg.norm(score) <= _MLE_GRAD_TOL:
            return FitResult(theta, True, it - 1, _information(x, theta))
        w = c * (1.0 - c)
        info = z.T @ (z * w[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationDetected("information matrix singular during Newton iteration")
        # slack lets the quadratic tail proceed once log-likelihood changes
        # drop below double-precision resolution at this magnitude
        floor = ll - 1e-9 * (1.0 + abs(ll))
        scale = 1.0
        for _ in range(30):
            candidate = theta + scale * step
            ll_new = loglik(candidate)
            if ll_new >= floor:
                break
            scale *= 0.5
        theta = theta + scale * step
        ll = loglik(theta)
        if np.linalg.norm(theta) > _SEPARATION_NORM:
            raise SeparationDetected(
                f"iterate norm {np.linalg.norm(theta):.1f} exceeds {_SEPARATION_NORM}"
            )
    return FitResult(theta, False, _MLE_MAX_ITER, _information(x, theta))


def _information(prices: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c = _conversion(prices, theta)
    w = c * (1.0 - c)
    z = np.column_stack([np.ones_like(prices), prices])
    return z.T @ (z * w[:, None])


# ---------------------------------------------------------------------------
# Covariance models
# ---------------------------------------------------------------------------


def _positive_counts(alloc: Allocation, label: str) -> np.ndarray:
    n = alloc.effective_counts()
    if np.any(n <= 0.0):
        raise ZeroCount(f"{label} requires a positive count at every design point")
    return n


@dataclass(frozen=True)
class DiagonalMeanModel:
    """Componentwise normal sample means; covariance diag(sigma_i^2 / N_i)."""

    sigma: np.ndarray
    kind: str = "diagonal_mean"

    def __post_init__(self) -> None:
        s = np.asarray(self.sigma, dtype=float).copy()
        if np.any(s < 0.0) or not np.all(np.isfinite(s)):
            raise InvalidParameter("sigma entries must be finite and >= 0")
        object.__setattr__(self, "sigma", s)

    @property
    def design_points(self) -> tuple:
        return tuple(range(self.sigma.size))

    def covariance(self, alloc: Allocation, theta: np.ndarray) -> np.ndarray:
        n = _positive_counts(alloc, self.kind)
        if n.size != self.sigma.size:
            raise InvalidParameter("allocation length does not match sigma length")
        return np.diag(self.sigma**2 / n)

    def simulate(self, alloc: Allocation, theta_true: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
        # the mean of N_i iid normals is exactly theta_i + sigma_i Z / sqrt(N_i)
        n = _positive_counts(alloc, self.kind)
        theta_true = np.asarray(theta_true, dtype=float)
        z = rng.standard_normal(theta_true.size)
        return theta_true + self.sigma / np.sqrt(n) * z


@dataclass(frozen=True)
class LogisticMleModel:
    """Conversions at allocated prices fit by logistic maximum likelihood."""

    prices: np.ndarray
    kind: str = "logistic_mle"

    def __post_init__(self) -> None:
        p = np.asarray(self.prices, dtype=float).copy()
        if p.ndim != 1 or p.size < 2:
            raise InvalidParameter("need at least two candidate prices")
        object.__setattr__(self, "prices", p)

    @property
    def design_points(self) -> tuple:
        return tuple(self.prices.tolist())

    def information(self, alloc: Allocation, theta: np.ndarray) -> np.ndarray:
        counts = alloc.effective_counts()
        if counts.size != self.prices.size:
            raise InvalidParameter("allocation length does not match price grid")
        w = _conversion(self.prices, np.asarray(theta, dtype=float))
        w = w * (1.0 - w) * counts
        m0 = float(w.sum())
        m1 = float(w @ self.prices)
        m2 = float(w @ self.prices**2)
        return np.array([[m0, m1], [m1, m2]])

    def covariance(self, alloc: Allocation, theta: np.ndarray) -> np.ndarray:
        info = self.information(alloc, theta)
        det = info[0, 0] * info[1, 1] - info[0, 1] ** 2
        if det <= 1e-12 * max(info[0, 0] * info[1, 1], 1e-300):
            raise SingularInformation("price design is rank deficient (one effective price)")
        return np.array([[info[1, 1], -info[0, 1]], [-info[0, 1], info[0, 0]]]) / det

    def simulate(self, alloc: Allocation, theta_true: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
        counts = alloc.counts()
        if counts.size != self.prices.size:
            raise InvalidParameter("allocation length does not match price grid")
        x = np.repeat(self.prices, counts)
        u = rng.random(x.size)
        y = (u < _conversion(x, np.asarray(theta_true, dtype=float))).astype(float)
        return fit_logistic_mle(x, y).theta_hat


_LOGNORMAL_VAR_FACTOR = float(np.e - 1.0)


@dataclass(frozen=True)
class LognormalGroupMeanModel:
    """Contact-trace sample means per traced group.

    One trace of an infected member of group j observes, for every group k, a
    Lognormal(log theta_kj - 1/2, 1) contact count with mean theta_kj and
    variance (e - 1) theta_kj^2. theta is flattened row-major over (k, j), and
    the allocation assigns M_j traces to each column j.
    """

    n_groups: int = 3
    kind: str = "lognormal_group_mean"

    @property
    def design_points(self) -> tuple:
        return tuple(range(self.n_groups))

    def covariance(self, alloc: Allocation, theta: np.ndarray) -> np.ndarray:
        m = _positive_counts(alloc, self.kind)
        if m.size != self.n_groups:
            raise InvalidParameter("allocation length does not match group count")
        theta = np.asarray(theta, dtype=float).reshape(self.n_groups, self.n_groups)
        var = _LOGNORMAL_VAR_FACTOR * theta**2 / m[None, :]
        return np.diag(var.ravel())

    def simulate(self, alloc: Allocation, theta_true: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
        counts = alloc.counts()
        if counts.size != self.n_groups:
            raise InvalidParameter("allocation length does not match group count")
        if np.any(counts <= 0):
            raise ZeroCount("every group needs at least one contact trace")
        theta = np.asarray(theta_true, dtype=float).reshape(self.n_groups, self.n_groups)
        # draw an allocation-independent noise block so compared allocations
        # share the underlying traces (common random numbers)
        z = rng.standard_normal((self.n_groups, self.n_groups, int(counts.max())))
        with np.errstate(divide="ignore"):  # theta_kj = 0 degenerates to a point mass at 0
            mu = np.log(theta) - 0.5
        est = np.empty_like(theta)
        for j, m_j in enumerate(counts):
            traces = np.exp(mu[:, j, None] + z[:, j, :m_j])
            est[:, j] = traces.mean(axis=1)
        return est.ravel()


CovarianceModel = DiagonalMeanModel | LogisticMleModel | LognormalGroupMeanModel


def covariance(model: CovarianceModel, alloc: Allocation, theta: np.ndarray) -> np.ndarray:
    """Covariance of (theta_hat - theta) under the model at the given allocation."""
    return model.covariance(alloc, np.asarray(theta, dtype=float))


def simulate_estimate(model: CovarianceModel, alloc: Allocation, theta_true: np.ndarray,
                      stream: RngStream | np.random.Generator) -> np.ndarray:
    """One draw of theta_hat from the model's actual data-generating process."""
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    return model.simulate(alloc, np.asarray(theta_true, dtype=float), rng)
