"""evistorm: a desk-scale evidential storm-nowcasting workbench.

Implements Normal-Inverse-Gamma evidential regression on top of a small
axis-factorized attention nowcasting model, with deep-ensemble and
MC-dropout baselines and a forecast-verification metric suite, all on a
self-contained float64 autodiff core so costs and gradients are exactly
accountable.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    EvistormError,
    GraphError,
    IngestError,
    NumericError,
    ShapeError,
    SplitMismatchError,
    TrainingDivergedError,
    TransferError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DomainError",
    "EvistormError",
    "GraphError",
    "IngestError",
    "NumericError",
    "ShapeError",
    "SplitMismatchError",
    "TrainingDivergedError",
    "TransferError",
    "__version__",
]
