"""Frozen encoders.

``TorchEncoder`` runs batch inference with a pretrained MLP head loaded
from a torch checkpoint; torch itself is imported lazily so the fixture
path works without it. ``StubEncoder`` is a deterministic stand-in used
by fixture mode: a fixed random projection of the flattened frames
followed by tanh. Neither encoder is ever trained here.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ExportError

STUB_DIM = 8


class StubEncoder:
    """Seeded random projection to ``STUB_DIM`` dimensions, tanh squashed."""

    def __init__(self, input_size: int, seed: int = 97):
        rng = np.random.default_rng(seed)
        self._w = rng.standard_normal((input_size, STUB_DIM)) / np.sqrt(input_size)
        self.embed_dim = STUB_DIM

    def encode(self, batch: np.ndarray) -> np.ndarray:
        flat = np.asarray(batch, dtype=np.float64).reshape(batch.shape[0], -1)
        if flat.shape[1] != self._w.shape[0]:
            raise ExportError(
                f"stub encoder expects {self._w.shape[0]} inputs, got {flat.shape[1]}"
            )
        return np.tanh(flat @ self._w)


class TorchEncoder:
    """MLP inference from a checkpoint of alternating Linear weights.

    The checkpoint is a dict with ``arch: "mlp"`` and ``layers``, a list
    of ``{"weight": (out, in), "bias": (out,)}`` tensors. Hidden layers
    are ReLU-activated; the last layer's output is the embedding, taken
    as-is (the extraction point is recorded by the caller as metadata).
    """

    def __init__(self, checkpoint: str | Path):
        path = Path(checkpoint)
        if not path.is_file():
            raise ExportError(f"missing checkpoint: {path}")
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - env without torch
            raise ExportError(
                "loading a checkpoint requires torch; install the [torch] extra"
            ) from exc
        self._torch = torch
        try:
            doc = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ExportError(f"{path}: cannot load checkpoint ({exc})") from exc
        if not isinstance(doc, dict) or doc.get("arch") != "mlp":
            raise ExportError(f"{path}: not an mlp checkpoint")
        layers = doc.get("layers")
        if not isinstance(layers, list) or not layers:
            raise ExportError(f"{path}: checkpoint has no layers")
        self._layers = []
        for i, layer in enumerate(layers):
            try:
                w = layer["weight"].to(torch.float64)
                b = layer["bias"].to(torch.float64)
            except (TypeError, KeyError, AttributeError):
                raise ExportError(f"{path}: layer {i} lacks weight/bias tensors") from None
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ExportError(f"{path}: layer {i} has inconsistent shapes")
            if i and w.shape[1] != self._layers[-1][0].shape[0]:
                raise ExportError(f"{path}: layer {i} does not fit layer {i - 1}")
            self._layers.append((w, b))
        self.input_size = int(self._layers[0][0].shape[1])
        self.embed_dim = int(self._layers[-1][0].shape[0])

    def encode(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        flat = np.asarray(batch, dtype=np.float64).reshape(batch.shape[0], -1)
        if flat.shape[1] != self.input_size:
            raise ExportError(
                f"encoder expects {self.input_size} inputs per sample, "
                f"got {flat.shape[1]}"
            )
        with torch.no_grad():
            x = torch.from_numpy(flat)
            for i, (w, b) in enumerate(self._layers):
                x = x @ w.T + b
                if i + 1 < len(self._layers):
                    x = torch.relu(x)
        return x.numpy()
