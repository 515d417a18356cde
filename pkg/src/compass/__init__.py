"""Decision-intelligence engine over tabular performance traces.

Answers recommend / reconfigure / what-if queries against a trained surrogate
by minimizing a constrained counterfactual loss, and labels every suggestion
with an evidence-backed trust verdict.
"""

__version__ = "0.1.0"

from .config import EngineConfig
from .errors import (
    CompassError,
    DatasetEmpty,
    FormatError,
    IndexUnavailable,
    MetricUndefined,
    ParseError,
    QueryError,
    SchemaError,
    ShapeError,
    TrainingFailed,
    UnknownCategory,
    UnknownCode,
    UnknownModel,
)

__all__ = [
    "EngineConfig",
    "CompassError",
    "DatasetEmpty",
    "FormatError",
    "IndexUnavailable",
    "MetricUndefined",
    "ParseError",
    "QueryError",
    "SchemaError",
    "ShapeError",
    "TrainingFailed",
    "UnknownCategory",
    "UnknownCode",
    "UnknownModel",
    "__version__",
]
