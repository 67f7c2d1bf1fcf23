"""Exception hierarchy shared by every evistorm subsystem.

All library errors derive from :class:`EvistormError` so callers (the CLI
in particular) can map failure categories to exit codes without matching
on message text.
"""


class EvistormError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EvistormError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(EvistormError, ValueError):
    """A numeric argument lies outside the function's valid domain."""


class NumericError(EvistormError, ArithmeticError):
    """A forward operation produced NaN or Inf from finite inputs."""


class GraphError(EvistormError, RuntimeError):
    """The differentiation graph is malformed (e.g. untracked loss)."""


class ConfigError(EvistormError, ValueError):
    """An experiment or component configuration is invalid."""


class IngestError(EvistormError, ValueError):
    """A raw frame file could not be parsed.

    ``byte_offset`` locates the first offending byte when known.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class CheckpointError(EvistormError, ValueError):
    """A checkpoint file is missing, corrupt, or inconsistent."""


class TransferError(EvistormError, ValueError):
    """Pretrained weights cannot be transferred to the target model."""

    def __init__(self, message: str, mismatched: list[str] | None = None):
        if mismatched:
            message = f"{message}: {', '.join(sorted(mismatched))}"
        super().__init__(message)
        self.mismatched = mismatched or []


class SplitMismatchError(EvistormError, ValueError):
    """Reports being compared were not computed on the same test split."""


class TrainingDivergedError(EvistormError, RuntimeError):
    """Training hit a non-finite loss; a diagnostic dump was written."""

    def __init__(self, message: str, dump_path: str | None = None):
        if dump_path:
            message = f"{message} (diagnostics written to {dump_path})"
        super().__init__(message)
        self.dump_path = dump_path
