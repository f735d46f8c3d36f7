"""Exception taxonomy shared by all modules."""


class MeanderWalkError(Exception):
    """Base class for package errors."""


class InvalidEdgeError(MeanderWalkError, ValueError):
    """Edge endpoints are not nearest neighbours on the lattice."""


class ManifestError(MeanderWalkError, ValueError):
    """Environment manifest is malformed, inconsistent, or wrong version."""


class ParameterError(MeanderWalkError, ValueError):
    """An operation received parameters outside its documented domain."""


class DomainError(ParameterError):
    """Analytic function evaluated outside its domain."""


class SingularQueryError(DomainError):
    """Transition-density query with an interior zero start point."""


class UnsupportedOrderError(ParameterError):
    """Finite-dimensional query order above the supported cap."""


class ResourceLimitError(MeanderWalkError, RuntimeError):
    """A computation would exceed a configured size guard."""


class BudgetExhaustedError(MeanderWalkError, RuntimeError):
    """Sampling budget ran out before the target was reached."""


class IllConditionedError(MeanderWalkError, ArithmeticError):
    """Estimated matrix is numerically singular."""


class FactorizationError(MeanderWalkError, ArithmeticError):
    """Matrix factorization failed (input not positive definite)."""


class DataError(MeanderWalkError, ValueError):
    """Statistical routine received unusable data (NaN, too few points)."""


class QuadratureError(MeanderWalkError, RuntimeError):
    """Adaptive quadrature failed to converge within the interval cap."""


class ConfigError(MeanderWalkError, ValueError):
    """Experiment configuration failed validation."""


class TableNotFoundError(MeanderWalkError, KeyError):
    """Requested report table does not exist."""
