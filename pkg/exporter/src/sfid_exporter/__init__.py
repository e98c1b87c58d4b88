"""Bridge between a promptable segmentation model and the SFID pipeline.

Runs a backend (a real model adapter, or a deterministic mock that needs no
weights) on a bi-temporal image pair with text prompts and writes the raw
per-head outputs as SFID tensors plus a scene-pair manifest. No
post-processing happens here; all algorithmic logic lives downstream.
"""

from .backends import BackendDescriptor, BackendError, HeadOutputs, build_backend
from .export import ExportError, export_pair

__version__ = "0.1.0"

__all__ = [
    "BackendDescriptor",
    "BackendError",
    "ExportError",
    "HeadOutputs",
    "build_backend",
    "export_pair",
    "__version__",
]
