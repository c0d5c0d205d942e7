"""Dense small-matrix numerics: finite differences, symmetric eigenvalues, RNG streams.

Everything here operates on plain ``numpy`` arrays (row-major ``float64``) and
is pure: no hidden state, safe to call concurrently. Randomness flows through
:class:`RngStream` descriptors, which derive independent counter-based
generators from a master seed, so replications are reproducible and
order-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, NonFiniteEvaluation, NotSymmetric

__all__ = [
    "FdConfig",
    "RngStream",
    "cross_derivative_matrix",
    "mixed_second_derivative",
    "sample_bernoulli",
    "sample_gamma",
    "sample_lognormal",
    "sample_normal",
    "symmetric_eigenvalues",
    "symmetric_eigh",
]


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdConfig:
    """Step size for the mixed second-derivative stencil.

    The default 1e-4 balances the O(h^2) truncation error against round-off
    amplified by the 4*h^2 divisor; 1e-6 remains available for callers that
    want to reproduce previously published runs exactly.
    """

    step_h: float = 1e-4

    def __post_init__(self) -> None:
        if not np.isfinite(self.step_h) or self.step_h <= 0.0:
            raise InvalidParameter(f"step_h must be positive and finite, got {self.step_h}")


def mixed_second_derivative(
    f: Callable[[np.ndarray, np.ndarray], float],
    x: np.ndarray,
    theta: np.ndarray,
    i: int,
    j: int,
    cfg: FdConfig = FdConfig(),
) -> float:
    """Four-point central estimate of d^2 f / dx_i dtheta_j.

    Uses [f(x+h, t+h) - f(x+h, t-h) - f(x-h, t+h) + f(x-h, t-h)] / (4 h^2)
    with the perturbation applied to coordinate ``i`` of ``x`` and ``j`` of
    ``theta``. Truncation error is O(h^2); exact for bilinear f.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (0 <= i < x.size):
        raise DimensionMismatch(f"index {i} out of range for x of size {x.size}")
    if not (0 <= j < theta.size):
        raise DimensionMismatch(f"index {j} out of range for theta of size {theta.size}")
    h = cfg.step_h
    vals = []
    for sx, st in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        xp = x.copy()
        tp = theta.copy()
        xp[i] += sx * h
        tp[j] += st * h
        vals.append(float(f(xp, tp)))
    if not all(np.isfinite(v) for v in vals):
        raise NonFiniteEvaluation(
            f"stencil for (x_{i}, theta_{j}) hit a non-finite objective value"
        )
    return (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)


def cross_derivative_matrix(
    f: Callable[[np.ndarray, np.ndarray], float],
    x: np.ndarray,
    theta: np.ndarray,
    cfg: FdConfig = FdConfig(),
    f_batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Full cross-derivative matrix with entry (i, j) = d^2 f / dx_i dtheta_j.

    When ``f_batch`` is given (mapping stacked (m, dim_x) and (m, dim_theta)
    arrays to m objective values) all 4 * dim_x * dim_theta stencil points are
    evaluated in a single call, which matters for simulation-backed objectives.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    nx, nt = x.size, theta.size
    if f_batch is None:
        out = np.empty((nx, nt))
        for i in range(nx):
            for j in range(nt):
                out[i, j] = mixed_second_derivative(f, x, theta, i, j, cfg)
        return out

    h = cfg.step_h
    signs = ((1, 1), (1, -1), (-1, 1), (-1, -1))
    xs = np.repeat(x[None, :], 4 * nx * nt, axis=0)
    ts = np.repeat(theta[None, :], 4 * nx * nt, axis=0)
    row = 0
    for i in range(nx):
        for j in range(nt):
            for sx, st in signs:
                xs[row, i] += sx * h
                ts[row, j] += st * h
                row += 1
    vals = np.asarray(f_batch(xs, ts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteEvaluation("batched stencil hit a non-finite objective value")
    vals = vals.reshape(nx, nt, 4)
    return (vals[:, :, 0] - vals[:, :, 1] - vals[:, :, 2] + vals[:, :, 3]) / (4.0 * h * h)


# ---------------------------------------------------------------------------
# Symmetric eigenvalues (cyclic Jacobi)
# ---------------------------------------------------------------------------

_SYM_TOL = 1e-10
_OFF_TOL = 1e-12


def symmetric_eigh(m: np.ndarray, sym_tol: float = _SYM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues descending, eigenvector matrix with matching columns).
    Convergence: off-diagonal Frobenius norm below 1e-12 * ||m||_F. Matrices
    here are at most ~10x10, so the O(n^3)-per-sweep cost is irrelevant.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSymmetric("matrix contains non-finite entries")
    if a.size and np.max(np.abs(a - a.T)) > sym_tol:
        raise NotSymmetric(
            f"asymmetry {np.max(np.abs(a - a.T)):.3e} exceeds tolerance {sym_tol:.1e}"
        )
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    q = np.eye(n)
    norm = np.linalg.norm(a)
    if n < 2 or norm == 0.0:
        w = np.diag(a).copy()
        order = np.argsort(-w, kind="stable")
        return w[order], q[:, order]

    target = _OFF_TOL * norm
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(100):
        off = np.linalg.norm(a[off_mask])
        if off <= target:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = a[p, r]
                if abs(apq) <= target / (n * n):
                    continue
                tau = (a[r, r] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                col_p = a[:, p].copy()
                col_r = a[:, r].copy()
                a[:, p] = c * col_p - s * col_r
                a[:, r] = s * col_p + c * col_r
                row_p = a[p, :].copy()
                row_r = a[r, :].copy()
                a[p, :] = c * row_p - s * row_r
                a[r, :] = s * row_p + c * row_r
                a[p, r] = 0.0
                a[r, p] = 0.0
                q_p = q[:, p].copy()
                q_r = q[:, r].copy()
                q[:, p] = c * q_p - s * q_r
                q[:, r] = s * q_p + c * q_r

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], q[:, order]


def symmetric_eigenvalues(m: np.ndarray, sym_tol: float = _SYM_TOL) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, descending.

    The internally computed basis reconstructs the input to
    ||m - Q diag(w) Q^T||_F <= 1e-10 * max(1, ||m||_F); a violation means the
    sweep limit was hit and is reported as an ArithmeticError.
    """
    m = np.asarray(m, dtype=float)
    w, q = symmetric_eigh(m, sym_tol=sym_tol)
    resid = np.linalg.norm(0.5 * (m + m.T) - (q * w) @ q.T)
    if resid > 1e-10 * max(1.0, np.linalg.norm(m)):
        raise ArithmeticError(f"jacobi reconstruction residual {resid:.3e} too large")
    return w


# ---------------------------------------------------------------------------
# Seeded random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of an independent random stream.

    Streams are derived counter-style: the master seed plus the index path is
    hashed into the key of a Philox generator, so equal (master_seed,
    stream_index) pairs always reproduce the same sequence and distinct
    indices give statistically independent streams regardless of creation
    order or thread count.
    """

    master_seed: int
    stream_index: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise InvalidParameter(f"master_seed must be a 64-bit unsigned int, got {seed}")
        idx = self.stream_index
        if isinstance(idx, (int, np.integer)):
            idx = (int(idx),)
        idx = tuple(int(k) for k in idx)
        if any(k < 0 for k in idx):
            raise InvalidParameter(f"stream_index components must be >= 0, got {idx}")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "stream_index", idx)

    def child(self, index: int) -> "RngStream":
        """Derived stream, independent of this one and of other children."""
        return RngStream(self.master_seed, self.stream_index + (int(index),))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.stream_index)
        return np.random.Generator(np.random.Philox(seq))


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameter(f"{name} must be finite, got {value}")
    return value


def sample_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    """One draw from N(mean, std^2); std = 0 degenerates to the mean."""
    mean = _check_finite("mean", mean)
    std = _check_finite("std", std)
    if std < 0.0:
        raise InvalidParameter(f"std must be >= 0, got {std}")
    if std == 0.0:
        return mean
    return mean + std * rng.standard_normal()


def sample_lognormal(rng: np.random.Generator, mu: float, sigma: float) -> float:
    """One draw of exp(N(mu, sigma^2)); mean is exp(mu + sigma^2 / 2)."""
    return float(np.exp(sample_normal(rng, mu, sigma)))


def sample_bernoulli(rng: np.random.Generator, p: float) -> int:
    p = _check_finite("p", p)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"p must lie in [0, 1], got {p}")
    return int(rng.random() < p)


def sample_gamma(rng: np.random.Generator, shape: float, scale: float = 1.0) -> float:
    """One Gamma(shape, scale) draw; mean is shape * scale."""
    shape = _check_finite("shape", shape)
    scale = _check_finite("scale", scale)
    if shape <= 0.0 or scale <= 0.0:
        raise InvalidParameter(f"shape and scale must be > 0, got ({shape}, {scale})")
    return float(rng.gamma(shape, scale))
