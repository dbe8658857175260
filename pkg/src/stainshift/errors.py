"""Exception hierarchy shared across the pipeline.

Plain ``ValueError`` is used for invalid arguments to pure operations
(dimension mismatches, out-of-range parameters). The exceptions below carry
pipeline semantics and map onto CLI exit codes.
"""


class StainShiftError(Exception):
    """Base class for pipeline errors."""

    exit_code = 1


class ConfigError(StainShiftError):
    """Bad or inconsistent configuration (unknown keys, unknown backend)."""

    exit_code = 2


class DataError(StainShiftError):
    """Unreadable, missing, or mismatched input data."""

    exit_code = 3


class BackendError(StainShiftError):
    """An external segmentation backend failed, timed out, or crashed."""

    exit_code = 4


class ContractViolationError(BackendError):
    """External backend ran but did not produce the promised outputs."""


class TrainingDivergedError(StainShiftError):
    """Non-finite loss encountered during translator training."""

    exit_code = 5


class CheckpointError(DataError):
    """A translation checkpoint archive is corrupt or incomplete."""
