"""Exception types shared across the package."""


class TasklossError(Exception):
    """Base class for all package errors."""


class DimensionError(TasklossError, ValueError):
    """Operand shapes do not conform for an operation."""


class NumericError(TasklossError, ArithmeticError):
    """A forward value or loss became NaN or infinite."""


class ContractError(TasklossError, ValueError):
    """A caller violated an operation precondition."""


class StateError(TasklossError, RuntimeError):
    """An object was used before it was ready (e.g. an unfitted standardizer)."""


class ConfigError(TasklossError, ValueError):
    """Invalid configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(TasklossError, ValueError):
    """Malformed input file. ``row`` is 1-based and counts the header row."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class CheckpointError(TasklossError, ValueError):
    """A checkpoint file is missing, corrupt, or has an unsupported version."""


class TrainingError(NumericError):
    """Training aborted because a loss became non-finite."""
