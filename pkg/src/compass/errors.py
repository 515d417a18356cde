"""Engine exception types."""


class CompassError(Exception):
    """Base class for engine errors."""


class SchemaError(CompassError):
    """Schema hints or drop lists reference unknown or ill-typed columns."""


class ParseError(CompassError):
    """A declared-numeric column holds a non-parsable token."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DatasetEmpty(CompassError):
    """No rows survive filtering."""


class UnknownCategory(CompassError):
    """Categorical value not in the fitted category set."""


class UnknownCode(CompassError):
    """Integer code outside the fitted category map."""


class ShapeError(CompassError):
    """Input vector dimensionality does not match the fitted feature order."""


class TrainingFailed(CompassError):
    """No surrogate family finished training within budget."""


class FormatError(CompassError):
    """Persisted-model stream is foreign, truncated, or version-incompatible."""


class UnknownModel(CompassError):
    """Analytical model name not in the registry."""


class MetricUndefined(CompassError):
    """Metric requested over an empty field set."""


class IndexUnavailable(CompassError):
    """Trust index cannot be built (empty validation partition)."""


class QueryError(CompassError):
    """Query violates one of its structural invariants."""

    def __init__(self, message: str, rule: str | None = None):
        super().__init__(message)
        self.rule = rule or message
