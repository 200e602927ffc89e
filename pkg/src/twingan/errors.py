"""Exception types shared across the package.

Every error raised on a contract violation is a subclass of TwinGanError so
callers can distinguish library failures from programming errors.
"""

from __future__ import annotations


class TwinGanError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(TwinGanError):
    """An operation received tensors with incompatible shapes or dtypes."""


class NonFiniteError(TwinGanError):
    """A NaN or Inf value appeared where only finite values are allowed."""


class ConfigError(TwinGanError):
    """A configuration value is invalid. Carries the offending field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UsageError(TwinGanError):
    """An API was called in an unsupported way (caller bug, not data)."""


class DataError(TwinGanError):
    """Dataset ingestion failed (missing files, undecodable images, ...)."""


class CheckpointError(TwinGanError):
    """Base class for checkpoint serialization failures."""


class CheckpointMagicError(CheckpointError):
    """The file does not start with the expected magic bytes."""


class CheckpointVersionError(CheckpointError):
    """The file declares a format version this code does not support."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended mid-record. Names the tensor that was cut off."""

    def __init__(self, tensor_name: str, detail: str = ""):
        self.tensor_name = tensor_name
        msg = f"checkpoint truncated while reading tensor '{tensor_name}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
