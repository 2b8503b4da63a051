"""
Exception hierarchy for the simulation library and its CLI exit codes
"""
from typing import Any, Dict, Literal, Optional

ErrorType = Literal["domain", "config", "range", "contract", "gap", "numerical"]

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GAP = 3
EXIT_NUMERICAL = 4


class LevyIMError(Exception):
    """Base error carrying a machine-readable type and details"""

    error_type: ErrorType = "numerical"
    exit_code: int = EXIT_NUMERICAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.message, "error_type": self.error_type, "details": self.details}


class DomainError(LevyIMError, ValueError):
    """Parameter outside its mathematical domain"""

    error_type = "domain"
    exit_code = EXIT_CONFIG


class ConfigError(LevyIMError, ValueError):
    """Invalid experiment configuration"""

    error_type = "config"
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        if field is not None:
            details["field"] = field
        super().__init__(message, details)
        self.field = field


class RangeError(LevyIMError):
    """Request outside the stored horizon of a path"""

    error_type = "range"

    def __init__(self, message: str, needed: Optional[float] = None, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        if needed is not None:
            details["needed"] = needed
        super().__init__(message, details)
        self.needed = needed


class ContractViolation(LevyIMError):
    """Caller broke an operation contract (frame mismatch, backward Q evolution, ...)"""

    error_type = "contract"


class GapViolationError(LevyIMError):
    """Spectral gap condition does not hold"""

    error_type = "gap"
    exit_code = EXIT_GAP


class NumericalError(LevyIMError):
    """Iteration failed to contract or converge"""

    error_type = "numerical"


class DivergenceError(NumericalError):
    """State blew up during time stepping"""

    def __init__(self, message: str, step: int, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        details["step"] = step
        super().__init__(message, details)
        self.step = step
