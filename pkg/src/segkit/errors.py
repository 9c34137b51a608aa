"""Exception types shared across the toolkit.

Every error raised by segkit derives from SegkitError so callers can
catch domain failures without swallowing programming errors.
"""


class SegkitError(Exception):
    """Base class for all segkit domain errors."""


class MalformedDescriptorError(SegkitError, ValueError):
    """RLE text is not a valid sequence of (start, length) integer pairs."""


class InvalidRunError(SegkitError, ValueError):
    """A run has a non-positive length, a bad start, or overlaps another run."""


class OutOfBoundsError(SegkitError, ValueError):
    """A run extends past the declared image size."""


class InvalidClassError(SegkitError, ValueError):
    """A class label is outside the allowed range."""


class MaskShapeError(SegkitError, ValueError):
    """Array shapes disagree with each other or with a declared size."""


class SchemaError(SegkitError, ValueError):
    """An annotation CSV is missing required columns."""


class RowError(SegkitError, ValueError):
    """A single annotation row could not be parsed.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyInputError(SegkitError, ValueError):
    """An operation that needs data received an empty collection."""


class ConfigError(SegkitError, ValueError):
    """A configuration value is out of range or inconsistent."""


class PairingError(SegkitError, ValueError):
    """Prediction/ground-truth sequences cannot be paired up."""


class NumericError(SegkitError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class DivergenceError(SegkitError, ArithmeticError):
    """Training produced a non-finite loss.

    Carries the epoch index at which the run was aborted.
    """

    def __init__(self, epoch: int, message: str = ""):
        super().__init__(message or f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class CheckpointError(SegkitError, ValueError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class FeasibilityWarning(UserWarning):
    """A bounded randomized search ended without meeting its tolerance.

    The best result found is still returned; the warning message reports
    the deviations actually achieved.
    """
