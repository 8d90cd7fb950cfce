"""SkullNet: a from-scratch CNN feature extractor whose flatten-layer
features feed a lazy multi-label nearest-neighbour classifier, plus the
surrounding training, evaluation and data tooling.

Set SKULLNET_THREADS before importing this package (or before importing
numpy) to cap the BLAS thread pools; 0 or unset leaves the defaults.
"""

import os as _os

_threads = _os.environ.get("SKULLNET_THREADS", "0")
if _threads not in ("", "0"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from . import data, metrics, mlknn, nn, serialize, tensor, train  # noqa: E402
from .errors import (  # noqa: E402
    IngestionError,
    NumericError,
    ShapeError,
    UndefinedMetricError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "data",
    "metrics",
    "mlknn",
    "nn",
    "serialize",
    "tensor",
    "train",
    "IngestionError",
    "NumericError",
    "ShapeError",
    "UndefinedMetricError",
    "ValidationError",
    "__version__",
]
