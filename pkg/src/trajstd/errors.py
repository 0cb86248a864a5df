"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TrajError(Exception):
    """Base class for all library errors."""


class ParseError(TrajError):
    """Malformed input file. Carries file, line and column when known."""

    def __init__(self, message: str, file: str | None = None,
                 line: int | None = None, column: str | int | None = None):
        self.file = file
        self.line = line
        self.column = column
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SchemaError(ParseError):
    """Input lacks a column the format requires."""


class ConfigurationError(TrajError):
    pass


class DataError(TrajError):
    """Values that violate a physical precondition (zero-area box, L <= 0, ...)."""


class PreconditionError(TrajError):
    pass


class FitError(TrajError):
    pass


class CalibrationError(TrajError):
    pass


class SimulationError(TrajError):
    pass


class ContractError(TrajError):
    """Caller-side contract violation, e.g. horizon mismatch."""


class IntegrityError(TrajError):
    pass
