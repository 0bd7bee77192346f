"""Exception and warning types used across the package."""

import numpy as np


class EllbiasError(Exception):
    """Base class for all package errors."""


class DomainError(EllbiasError, ValueError):
    """Input outside a function's mathematical domain or a family side condition."""


class QuadratureError(EllbiasError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class LinAlgError(EllbiasError, np.linalg.LinAlgError):
    """Linear-algebra failure (non-PD scale matrix, singular solve, ...)."""


class SingularInformationError(EllbiasError):
    """Fisher information matrix is numerically singular."""


class NonConvergenceError(EllbiasError):
    """An iterative fit did not converge and a converged fit was required."""


class SplitError(EllbiasError):
    """Declared location/scale parameter split is violated by the model."""


class DimensionError(EllbiasError, ValueError):
    """Inconsistent array dimensions in model or data construction."""


class ConfigError(EllbiasError, ValueError):
    """Invalid run or simulation configuration."""


class RankWarning(UserWarning):
    """Stacked derivative matrix F is rank deficient at the evaluated point.

    Reported (not fatal): rank deficiency away from the optimum is common
    and the fit may still proceed.
    """
