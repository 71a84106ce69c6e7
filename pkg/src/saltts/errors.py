"""Exception hierarchy shared across the package."""


class SalttsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SalttsError):
    """Invalid configuration (bad dimensions, unknown variant, bad flags)."""


class DimensionError(SalttsError):
    """Tensor or matrix shapes do not line up."""


class NumericError(SalttsError):
    """A non-finite value (NaN/Inf) appeared in a computation."""


class FormatError(SalttsError):
    """A binary or text artifact does not match its declared layout.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(SalttsError):
    """Corpus content is inconsistent (missing files, mismatched dims)."""


class AlignmentError(SalttsError):
    """Frame counts disagree where the repeater should have matched them."""


class CheckpointError(SalttsError):
    """A checkpoint cannot be loaded into the requested graph."""
