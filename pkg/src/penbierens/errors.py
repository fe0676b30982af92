"""Exception types raised across the package."""

from __future__ import annotations


class PenBierensError(Exception):
    """Base class for all package errors."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class NonFiniteInput(PenBierensError, ValueError):
    code = "non_finite_input"


class ZeroVarianceColumn(PenBierensError, ValueError):
    code = "zero_variance_column"

    def __init__(self, column: int):
        super().__init__(f"column {column} has zero sample variance")
        self.column = column


class NonFiniteResidual(PenBierensError, ValueError):
    code = "non_finite_residual"

    def __init__(self, row: int):
        super().__init__(f"residual at row {row} is not finite")
        self.row = row


class DegenerateVariance(PenBierensError, ArithmeticError):
    code = "degenerate_variance"


class NonFiniteObjective(PenBierensError, ArithmeticError):
    code = "non_finite_objective"


class GridTooLarge(PenBierensError, ValueError):
    code = "grid_too_large"


class PathMonotonicityFailure(PenBierensError, RuntimeError):
    code = "path_monotonicity_failure"


class PluginFailure(PenBierensError, RuntimeError):
    code = "plugin_failure"


class BadGrid(PenBierensError, ValueError):
    code = "bad_grid"


class MissingColumn(PenBierensError, KeyError):
    code = "missing_column"

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"column {self.name!r} not found in header"


class NonNumericCell(PenBierensError, ValueError):
    code = "non_numeric_cell"

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column


class EmptyAfterFiltering(PenBierensError, ValueError):
    code = "empty_after_filtering"


class ConfigError(PenBierensError, ValueError):
    code = "config_error"
