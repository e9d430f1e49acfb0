from typing import Any, Dict, List, Optional


class NlsLabError(Exception):
    """Base error: a message plus structured details, like the API error payload."""

    exit_code = 2

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


# Configuration / precondition family (exit code 1)


class ConfigError(NlsLabError, ValueError):
    exit_code = 1


class ConfigValidationError(ConfigError):
    """Raised with every violation found, not just the first."""

    def __init__(self, errors: List[str], message: str = "Configuration is invalid"):
        super().__init__(message, {"errors": list(errors)})
        self.errors = list(errors)

    def __str__(self) -> str:
        return f"{self.message}: " + "; ".join(self.errors)


class GridError(ConfigError):
    pass


class GridMismatchError(ConfigError):
    pass


class ExistenceWindowError(ConfigError):
    pass


class DegenerateVelocityError(ConfigError):
    pass


class CutoffWindowError(ConfigError):
    pass


class PlanError(ConfigError):
    pass


class PreconditionError(ConfigError):
    pass


class NotCriticalError(PreconditionError):
    pass


# Numerical family (exit code 2)


class NumericError(NlsLabError, ArithmeticError):
    exit_code = 2


class DerivativeOrderError(NumericError, ValueError):
    pass


class NonFiniteFieldError(NumericError):
    pass


class BlowUpError(NumericError):
    pass


class ShootingError(NumericError):
    """Shooting did not converge; `details["history"]` holds the bracketing steps."""


class SingularModulationError(NumericError):
    pass


class ResolutionError(NumericError):
    pass


class DegenerateConstraintError(NumericError):
    pass


class EigenpairNotFoundError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass


# Storage family (exit code 3)


class StorageError(NlsLabError, OSError):
    exit_code = 3


class SnapshotFormatError(StorageError):
    pass


class OutputError(StorageError):
    pass
