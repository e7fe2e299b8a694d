"""Export configuration.

A config either asks for the built-in fixture (a tiny two-class dataset
from the stub encoder, used to smoke-test downstream consumers) or names
a sample index plus an encoder checkpoint to embed for real. The encoder
variant and extraction point are carried as metadata only; this package
never trains anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ExportError


@dataclass(frozen=True)
class ExportConfig:
    output_dir: str
    fixture: bool = False
    dataset: str | None = None
    dataset_name: str | None = None
    checkpoint: str | None = None
    frame_length: int = 8
    batch_size: int = 64
    base_classes: int | None = None
    increment_size: int = 1
    encoder_variant: str = "cross-entropy"
    extraction_point: str = "encoder output"

    def __post_init__(self):
        if self.frame_length < 1:
            raise ExportError("frame_length must be >= 1")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if self.increment_size < 1:
            raise ExportError("increment_size must be >= 1")
        if not self.fixture:
            missing = [
                name
                for name, value in (
                    ("dataset", self.dataset),
                    ("checkpoint", self.checkpoint),
                    ("base_classes", self.base_classes),
                )
                if value is None
            ]
            if missing:
                raise ExportError(
                    f"non-fixture export needs {', '.join(missing)} in the config"
                )
        if self.base_classes is not None and self.base_classes < 1:
            raise ExportError("base_classes must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExportConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ExportError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ExportError(f"bad config document: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ExportConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ExportError(f"{path}: top level must be a JSON object")
        return cls.from_dict(doc)
