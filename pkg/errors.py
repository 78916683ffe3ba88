"""
errors.py – exception hierarchy for robust-baen.

Every error carries a short ``category`` token so the CLI can print a single
machine-parseable line (``error=<category> <detail>``) before exiting.
"""


class BaenError(Exception):
    """Base class for all library errors."""

    category = "internal"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def one_line(self) -> str:
        return f"error={self.category} {self.detail}".replace("\n", " ")


class DataError(BaenError):
    """Malformed, missing or inconsistent input data."""

    category = "data"


class DimensionError(BaenError):
    """Feature-count or shape mismatch between two operands."""

    category = "dimension"


class ConfigError(BaenError):
    """Invalid hyperparameters, grids, protocol files or CLI settings."""

    category = "config"


class SolverError(BaenError):
    """QP solver preconditions violated or non-finite arithmetic."""

    category = "solver"


class FormatError(BaenError):
    """Unreadable or wrongly versioned model / protocol / report file."""

    category = "format"


class StatsError(BaenError):
    """Statistical test preconditions violated."""

    category = "stats"
