"""Exception hierarchy shared by the solver services"""
from typing import Any, Optional


class SolverError(Exception):
    """Base class for every error raised by the services"""

    code = "solver_error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class InvalidParameterError(SolverError, ValueError):
    code = "invalid_parameter"


class GridMismatchError(InvalidParameterError):
    code = "grid_mismatch"


class NonFiniteFieldError(InvalidParameterError):
    code = "non_finite_field"


class NegativePotentialError(InvalidParameterError):
    code = "negative_potential"


class UndefinedAtZeroError(InvalidParameterError):
    code = "undefined_at_zero"


class ZeroFieldError(InvalidParameterError):
    code = "zero_field"


class DegenerateSignPartError(ZeroFieldError):
    code = "degenerate_sign_part"


class ConfigurationMismatchError(InvalidParameterError):
    code = "configuration_mismatch"


class BracketError(SolverError, RuntimeError):
    code = "bracket_failure"


class NonConvergenceError(SolverError, RuntimeError):
    """Raised when a solve stops without meeting its tolerance; keeps the best iterate"""

    code = "non_convergence"

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report

    def to_dict(self) -> dict:
        data = super().to_dict()
        if self.report is not None:
            data["level"] = self.report.level
            data["residual"] = self.report.residual
            data["iterations"] = self.report.iterations
        return data


class SignCollapseError(NonConvergenceError):
    code = "sign_collapse"


class ConfigError(SolverError):
    code = "config_error"


class ConfigParseError(ConfigError):
    code = "config_parse_error"

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["line"] = self.line
        return data


class ConfigValidationError(ConfigError):
    code = "config_validation_error"

    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: {constraint}")
        self.key = key

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["key"] = self.key
        return data


class FieldFormatError(InvalidParameterError):
    code = "field_format"
