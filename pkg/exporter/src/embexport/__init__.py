"""Embedding export: frozen encoders in, feature-store datasets out."""

from .config import ExportConfig
from .encoder import STUB_DIM, StubEncoder, TorchEncoder
from .errors import ExportError
from .export import export
from .samples import ClassSamples, fit_frames, load_index, load_samples
from .writer import DTYPE_TOKEN, MANIFEST_VERSION, feature_bytes, write_dataset

__version__ = "0.1.0"

__all__ = [
    "ClassSamples",
    "DTYPE_TOKEN",
    "ExportConfig",
    "ExportError",
    "MANIFEST_VERSION",
    "STUB_DIM",
    "StubEncoder",
    "TorchEncoder",
    "export",
    "feature_bytes",
    "fit_frames",
    "load_index",
    "load_samples",
    "write_dataset",
]
