"""Exception types shared across the package."""


class TcotError(Exception):
    """Base class for all package errors."""


class InvalidPartition(TcotError):
    """Segment count is incompatible with the frame count."""


class BudgetTooSmall(TcotError):
    """Token budget does not fit even a single frame."""


class ConfigError(TcotError):
    """Experiment or synthesis configuration failed validation."""


class GatewayError(TcotError):
    """Base class for backend access failures."""


class BackendUnavailable(GatewayError):
    """Backend could not be reached after exhausting retries."""


class PayloadTooLarge(GatewayError):
    """Backend rejected the request for exceeding its context size."""


class AuthError(GatewayError):
    """Backend rejected the credentials, or no credentials were configured."""


class ItemTooLong(GatewayError):
    """Text item exceeds the embedding backend's token limit."""


class UnknownStyle(TcotError):
    """Caption style token outside the supported set."""


class JudgeParseFailure(TcotError):
    """Judge response contained no usable 1..5 score."""


class SchemaError(TcotError):
    """Dataset file failed validation; message carries line diagnostics."""


class MissingRecord(TcotError):
    """A trace refers to a question id absent from the dataset."""


class NoReferenceSpans(TcotError):
    """Precision/recall requested for a record without time references."""


class MissingTraces(TcotError):
    """A run directory does not contain the expected trace file."""


class DatasetMismatch(TcotError):
    """Refusing to merge runs executed against different datasets."""
