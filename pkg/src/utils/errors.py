"""Error hierarchy shared by all modules."""


class StfError(Exception):
    """Base class for every error raised deliberately by this package."""


class ParseError(StfError, ValueError):
    """A row of an input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class SchemaError(StfError, ValueError):
    """Input data violates the observation schema (grid, duplicates, columns)."""


class ConfigError(StfError, ValueError):
    """Experiment or schema configuration failed validation."""

    def __init__(self, message: str, offending_keys: list[str] | None = None) -> None:
        self.offending_keys = offending_keys or []
        if self.offending_keys:
            message = f"{message}: {', '.join(self.offending_keys)}"
        super().__init__(message)


class ParameterError(StfError, ValueError):
    """A numeric parameter is outside its admissible range."""


class NoUsableDataError(StfError, ValueError):
    """Filtering left nothing to work with."""


class InsufficientContextError(StfError, ValueError):
    """No usable source could be found around a target coordinate."""


class ShapeError(StfError, ValueError):
    """Array shapes disagree."""


class NumericError(StfError, ValueError):
    """A non-finite value appeared where finite values are required."""

    def __init__(self, message: str, step: int | None = None) -> None:
        self.step = step
        suffix = f" (step {step})" if step is not None else ""
        super().__init__(f"{message}{suffix}")


class TrainingDivergedError(StfError, ValueError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, batch: int) -> None:
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class CheckpointError(StfError):
    """A checkpoint is missing, unreadable or of an unknown format."""
