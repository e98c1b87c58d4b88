"""Exception types shared across the package."""


class SfidError(Exception):
    """Base class for every error raised by this package."""


class TensorFormatError(SfidError):
    """Tensor file is structurally invalid: magic, version, dtype code, or layout."""


class TensorValueError(SfidError):
    """Tensor contents violate a value invariant (NaN/Inf, probability range)."""


class ManifestError(SfidError):
    """Scene-pair manifest is malformed or internally inconsistent."""


class ShapeMismatchError(SfidError):
    """Grid dimensions disagree between operands or with a declared shape."""


class GenerationError(SfidError):
    """A synthetic scene cannot be generated from the requested configuration."""


class ConfigError(SfidError):
    """Invalid run configuration."""


class EvalInputError(SfidError):
    """Prediction and ground-truth directories cannot be paired up."""
