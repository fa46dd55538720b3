"""Exception hierarchy. The CLI maps each class to an exit code."""


class PredseqError(Exception):
    exit_code = 1


class ConfigError(PredseqError, ValueError):
    """Invalid test definition or configuration field."""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DataError(PredseqError, ValueError):
    """Malformed, out-of-order or post-terminal observations."""

    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(DataError):
    """Checkpoint record is corrupted or has an unsupported version."""


class NumericalError(PredseqError, ArithmeticError):
    """Degenerate numerics: empty risk sets, too few replicates and the like."""

    exit_code = 4
