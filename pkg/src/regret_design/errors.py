"""Exception hierarchy shared across the package.

Every library-raised failure derives from :class:`RegretDesignError` so callers
(and the CLI) can distinguish our diagnostics from programming errors.
"""


class RegretDesignError(Exception):
    """Base class for all failures raised by this package."""


class NonFiniteEvaluation(RegretDesignError):
    """An objective or stencil evaluation produced nan/inf."""


class NotSymmetric(RegretDesignError):
    """Matrix handed to a symmetric routine violates the symmetry tolerance."""


class InvalidParameter(RegretDesignError):
    """Distribution or configuration parameter outside its valid domain."""


class NoInteriorMinimum(RegretDesignError):
    """1-D minimization converged to a bracket endpoint."""


class SingularInformation(RegretDesignError):
    """Information matrix is singular (degenerate design)."""


class ZeroCount(RegretDesignError):
    """An allocation count that the covariance model divides by is zero."""


class SeparationDetected(RegretDesignError):
    """Logistic MLE diverged: the data are (quasi-)completely separated."""


class RankDeficient(RegretDesignError):
    """Regression design matrix has deficient rank (e.g. one distinct price)."""


class DimensionMismatch(RegretDesignError):
    """Incompatible matrix/vector dimensions."""


class DegenerateDirection(RegretDesignError):
    """All sensitivity-weighted directions vanish; no allocation preference."""


class DegenerateParameter(RegretDesignError):
    """Parameter value makes the problem ill-posed (e.g. zero curvature)."""


class BudgetTooSmall(RegretDesignError):
    """Total budget below the minimum feasible count."""


class NoFeasibleCandidate(RegretDesignError):
    """Every candidate allocation failed (singular or invalid)."""


class InfeasibleFloor(RegretDesignError):
    """Per-point floor cannot be met within the total budget."""


class UnstableStep(RegretDesignError):
    """Discrete-time epidemic step would violate the stability guard."""


class TooManyDiscards(RegretDesignError):
    """More than 20% of Monte Carlo replications were discarded."""


class ConfigError(RegretDesignError):
    """Invalid CLI flag or configuration file content."""
