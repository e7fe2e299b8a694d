"""Feature-store dataset writer.

Emits the interchange format the continual-learning engine reads: a
``manifest.json`` (version 1, dtype ``f32le``) plus one headerless
little-endian float32 file per class and split, row-major, so each file
is exactly ``count * dim * 4`` bytes. Labels must be globally unique and
session ids contiguous from zero; every row must be finite. Violations
raise before anything is written.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExportError

MANIFEST_VERSION = 1
DTYPE_TOKEN = "f32le"


def feature_bytes(rows: np.ndarray, dim: int, what: str) -> bytes:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != dim:
        raise ExportError(f"{what}: expected (n, {dim}) rows, got {rows.shape}")
    if rows.size and not np.isfinite(rows).all():
        bad = int(np.argwhere(~np.isfinite(rows).all(axis=1))[0, 0])
        raise ExportError(f"{what}: non-finite value in row {bad}")
    return np.ascontiguousarray(rows, dtype="<f4").tobytes()


def write_dataset(
    out_dir: str | Path,
    dim: int,
    sessions: Sequence[Sequence[tuple[int, np.ndarray, np.ndarray]]],
    label_names: dict[int, str] | None = None,
) -> Path:
    """Write sessions of (label, train_rows, test_rows); returns manifest path."""
    if dim < 1:
        raise ExportError("dim must be >= 1")
    if not sessions:
        raise ExportError("need at least one session")

    out_dir = Path(out_dir)
    seen: set[int] = set()
    planned = []  # (label, fname, payload, count) per file
    manifest_sessions = []
    for sid, classes in enumerate(sessions):
        if not classes:
            raise ExportError(f"session {sid} has no classes")
        entries = []
        for label, train_rows, test_rows in classes:
            label = int(label)
            if label < 0:
                raise ExportError(f"label {label} is negative")
            if label in seen:
                raise ExportError(f"label {label} appears in more than one session")
            seen.add(label)
            train_payload = feature_bytes(train_rows, dim, f"class {label} train")
            test_payload = feature_bytes(test_rows, dim, f"class {label} test")
            train_count = len(train_payload) // (dim * 4)
            test_count = len(test_payload) // (dim * 4)
            if train_count < 1:
                raise ExportError(f"class {label} has no training rows")
            train_file = f"class_{label:04d}_train.bin"
            test_file = f"class_{label:04d}_test.bin"
            planned.append((train_file, train_payload))
            planned.append((test_file, test_payload))
            entries.append(
                {
                    "label": label,
                    "train_file": train_file,
                    "test_file": test_file,
                    "train_count": train_count,
                    "test_count": test_count,
                }
            )
        manifest_sessions.append({"session_id": sid, "classes": entries})

    doc = {
        "version": MANIFEST_VERSION,
        "dim": dim,
        "dtype": DTYPE_TOKEN,
        "sessions": manifest_sessions,
    }
    if label_names:
        doc["label_names"] = {str(k): str(v) for k, v in sorted(label_names.items())}

    out_dir.mkdir(parents=True, exist_ok=True)
    for fname, payload in planned:
        (out_dir / fname).write_bytes(payload)
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return manifest_path
