"""Bi-temporal change detection over serialized multi-head segmentation outputs.

The package turns per-image semantic stacks, instance query maps, and
presence scores into per-category binary change masks: fuse the heads into
a label map per time, split each category mask into 8-connected instances,
and flag instances without a sufficiently overlapping counterpart at the
other time. Three simpler matching strategies (pixel comparison, L1/L2
logit distance) are included as ablation baselines, along with an IoU/F1
evaluation harness and a synthetic scene generator for verification.
"""

from .errors import (
    ConfigError,
    EvalInputError,
    GenerationError,
    ManifestError,
    SfidError,
    ShapeMismatchError,
    TensorFormatError,
    TensorValueError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EvalInputError",
    "GenerationError",
    "ManifestError",
    "SfidError",
    "ShapeMismatchError",
    "TensorFormatError",
    "TensorValueError",
    "__version__",
]
