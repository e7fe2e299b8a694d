"""Export orchestration: samples -> frozen encoder -> feature-store dataset.

The split definition assigns the lowest ``base_classes`` labels to
session 0 and deals the remaining labels, in ascending order, into
sessions of ``increment_size``. The remainder must divide evenly or the
export refuses, so a session layout can never silently drop classes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ExportConfig
from .encoder import STUB_DIM, StubEncoder, TorchEncoder
from .errors import ExportError
from .samples import load_index, load_samples
from .writer import write_dataset

FIXTURE_TRAIN_PER_CLASS = 20
FIXTURE_TEST_PER_CLASS = 8


def _fixture_raw(label: int, n: int, frame_length: int, seed: int) -> np.ndarray:
    """Synthetic motion snippets: class-specific frequency plus jitter."""
    rng = np.random.default_rng(seed)
    t = np.arange(frame_length, dtype=np.float64)
    freq = 0.5 + label  # one frequency per class
    base = np.stack([np.sin(freq * t + k) for k in range(9)], axis=1)
    jitter = rng.standard_normal((n, frame_length, 9)) * 0.1
    return base[None, :, :] + jitter


def _encode_batched(encoder, batch: np.ndarray, batch_size: int) -> np.ndarray:
    if batch.shape[0] == 0:
        return np.zeros((0, encoder.embed_dim))
    parts = [
        encoder.encode(batch[at : at + batch_size])
        for at in range(0, batch.shape[0], batch_size)
    ]
    return np.concatenate(parts, axis=0)


def _sessions_from_split(labels, base_classes: int, increment_size: int):
    if base_classes > len(labels):
        raise ExportError(
            f"split asks for {base_classes} base classes, dataset has {len(labels)}"
        )
    rest = labels[base_classes:]
    if rest and len(rest) % increment_size != 0:
        raise ExportError(
            f"{len(rest)} incremental classes do not divide into sessions "
            f"of {increment_size}"
        )
    chunks = [labels[:base_classes]]
    for at in range(0, len(rest), increment_size):
        chunks.append(rest[at : at + increment_size])
    return chunks


def _write_metadata(config: ExportConfig, out_dir: Path, encoder_desc: str) -> None:
    doc = {
        "dataset": config.dataset_name or config.dataset or "fixture",
        "checkpoint": config.checkpoint,
        "encoder": encoder_desc,
        "encoder_variant": config.encoder_variant,
        "extraction_point": config.extraction_point,
        "frame_length": config.frame_length,
        "batch_size": config.batch_size,
    }
    with open(out_dir / "export_meta.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def export(config: ExportConfig) -> Path:
    """Run one export; returns the dataset directory."""
    out_dir = Path(config.output_dir)
    if config.fixture:
        manifest = _export_fixture(config, out_dir)
    else:
        manifest = _export_real(config, out_dir)
    return manifest.parent


def _export_fixture(config: ExportConfig, out_dir: Path) -> Path:
    """Two classes, d=8, from the stub encoder: a downstream smoke dataset."""
    encoder = StubEncoder(config.frame_length * 9)
    sessions = []
    for label in (0, 1):
        train_raw = _fixture_raw(
            label, FIXTURE_TRAIN_PER_CLASS, config.frame_length, seed=1000 + label
        )
        test_raw = _fixture_raw(
            label, FIXTURE_TEST_PER_CLASS, config.frame_length, seed=2000 + label
        )
        train = _encode_batched(encoder, train_raw, config.batch_size)
        test = _encode_batched(encoder, test_raw, config.batch_size)
        sessions.append((label, train, test))
    split = [[sessions[0]], [sessions[1]]]  # 1 base class + 1 increment
    manifest = write_dataset(
        out_dir, STUB_DIM, split, label_names={0: "fixture-a", 1: "fixture-b"}
    )
    _write_metadata(config, out_dir, "stub")
    return manifest


def _export_real(config: ExportConfig, out_dir: Path) -> Path:
    root = Path(config.dataset)
    classes = load_index(root)
    index_dir = root if root.is_dir() else root.parent
    chunks = _sessions_from_split(
        [c.label for c in classes], config.base_classes, config.increment_size
    )

    encoder = TorchEncoder(config.checkpoint)
    blocks = {}
    for c in classes:
        train_raw = load_samples(index_dir, c.train, config.frame_length, f"class {c.label}")
        test_raw = load_samples(index_dir, c.test, config.frame_length, f"class {c.label}")
        train = _encode_batched(encoder, train_raw, config.batch_size)
        test = (
            _encode_batched(encoder, test_raw, config.batch_size)
            if test_raw.shape[0]
            else np.zeros((0, encoder.embed_dim))
        )
        blocks[c.label] = (c.label, train, test)

    sessions = [[blocks[l] for l in chunk] for chunk in chunks]
    names = {c.label: c.name for c in classes if c.name is not None}
    manifest = write_dataset(out_dir, encoder.embed_dim, sessions, label_names=names or None)
    _write_metadata(
        config,
        out_dir,
        f"mlp {encoder.input_size}->{encoder.embed_dim}",
    )
    return manifest
