"""Exception hierarchy shared by every basketse module."""


class BasketSEError(Exception):
    """Base class for all errors raised by basketse."""


class StructuralIntegrityError(BasketSEError):
    """A dataset violates a structural invariant (e.g. a transaction owned by two users)."""

    def __init__(self, message, transaction_id=None):
        super().__init__(message)
        self.transaction_id = transaction_id


class EmptySampleError(BasketSEError):
    pass


class EmptyDatasetError(BasketSEError):
    pass


class InsufficientSampleError(BasketSEError):
    pass


class NoPairsError(BasketSEError):
    pass


class UnsupportedMetricError(BasketSEError):
    pass


class ConfigError(BasketSEError, ValueError):
    pass


class IngestError(BasketSEError):
    """Raised for malformed input files; carries the offending 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingFileError(IngestError):
    pass


class DegenerateResampleError(BasketSEError):
    """A bootstrap resample put zero total weight on the sample."""
