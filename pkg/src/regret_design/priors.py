"""Parameter priors used for Bayesian design and regret evaluation.

A prior is anything with a ``dim`` attribute and a ``draw(rng)`` method
returning a theta vector; the three shapes below cover the shipped problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter

__all__ = ["GammaMatrixPrior", "IndependentNormalPrior", "PointMassPrior"]


@dataclass(frozen=True)
class PointMassPrior:
    """Degenerate prior: every draw returns the same theta."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).copy())

    @property
    def dim(self) -> int:
        return self.theta.size

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.theta.copy()


@dataclass(frozen=True)
class IndependentNormalPrior:
    """Componentwise normal prior with mean vector and standard deviations."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).copy()
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), mean.shape).copy()
        if np.any(sd < 0.0) or not np.all(np.isfinite(sd)):
            raise InvalidParameter("prior standard deviations must be finite and >= 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @property
    def dim(self) -> int:
        return self.mean.size

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.sd * rng.standard_normal(self.mean.size)


@dataclass(frozen=True)
class GammaMatrixPrior:
    """Independent Gamma(shape, scale=1) prior over a matrix of parameters.

    Draws are returned flattened row-major so they line up with covariance
    models indexed by (row, column) pairs; the prior mean equals ``shape``.
    """

    shape: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        shape = np.asarray(self.shape, dtype=float).copy()
        if np.any(shape <= 0.0) or not np.all(np.isfinite(shape)):
            raise InvalidParameter("gamma shape entries must be finite and > 0")
        if self.scale <= 0.0:
            raise InvalidParameter(f"gamma scale must be > 0, got {self.scale}")
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return self.shape.size

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, self.scale).ravel()
