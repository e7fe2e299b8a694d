"""Raw sample access: the index file and frame-length normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ExportError


@dataclass(frozen=True)
class ClassSamples:
    label: int
    name: str | None
    train: tuple[str, ...]
    test: tuple[str, ...]


def load_index(root: str | Path) -> list[ClassSamples]:
    """Read ``index.json``: per class, lists of .npy sample paths.

    Paths are relative to the index's directory. Returns classes sorted
    by label; duplicates and classes without training samples are
    rejected.
    """
    root = Path(root)
    path = root / "index.json" if root.is_dir() else root
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ExportError(f"cannot read sample index: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("classes"), list):
        raise ExportError(f"{path}: expected an object with a 'classes' list")

    out = []
    seen = set()
    for pos, raw in enumerate(doc["classes"]):
        where = f"{path}: classes[{pos}]"
        if not isinstance(raw, dict) or "label" in raw and isinstance(raw["label"], bool):
            raise ExportError(f"{where}: must be an object with an integer label")
        try:
            label = int(raw["label"])
        except (KeyError, TypeError, ValueError):
            raise ExportError(f"{where}: must carry an integer 'label'") from None
        if label in seen:
            raise ExportError(f"{path}: duplicate label {label}")
        seen.add(label)
        train = tuple(str(p) for p in raw.get("train", []))
        test = tuple(str(p) for p in raw.get("test", []))
        if not train:
            raise ExportError(f"{where}: class {label} has no training samples")
        out.append(
            ClassSamples(
                label=label,
                name=str(raw["name"]) if "name" in raw else None,
                train=train,
                test=test,
            )
        )
    if not out:
        raise ExportError(f"{path}: no classes listed")
    return sorted(out, key=lambda c: c.label)


def fit_frames(sample: np.ndarray, frame_length: int) -> np.ndarray:
    """Normalize a (frames, ...) sample to exactly ``frame_length`` frames.

    Longer sequences are uniformly subsampled; shorter ones repeat their
    last frame. One- or zero-frame inputs are rejected only when empty.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim < 2:
        raise ExportError(f"sample must be at least (frames, features), got {sample.shape}")
    t = sample.shape[0]
    if t == 0:
        raise ExportError("sample has no frames")
    if t == frame_length:
        return sample
    if t > frame_length:
        idx = np.round(np.linspace(0, t - 1, frame_length)).astype(np.int64)
        return sample[idx]
    pad = np.repeat(sample[-1:], frame_length - t, axis=0)
    return np.concatenate([sample, pad], axis=0)


def load_samples(
    root: Path, paths: tuple[str, ...], frame_length: int, what: str
) -> np.ndarray:
    """Stack .npy samples into one (n, frame_length * features) batch."""
    rows = []
    width = None
    for rel in paths:
        fpath = root / rel
        try:
            arr = np.load(fpath, allow_pickle=False)
        except OSError as exc:
            raise ExportError(f"{what}: cannot read sample '{rel}': {exc}") from exc
        except ValueError as exc:
            raise ExportError(f"{what}: bad sample '{rel}': {exc}") from exc
        flat = fit_frames(arr, frame_length).reshape(-1)
        if width is None:
            width = flat.shape[0]
        elif flat.shape[0] != width:
            raise ExportError(
                f"{what}: sample '{rel}' has {flat.shape[0]} values per "
                f"sequence, expected {width}"
            )
        rows.append(flat)
    return np.stack(rows) if rows else np.zeros((0, 0))
