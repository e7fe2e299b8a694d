"""Feature dataset format: manifest, per-class binary files, CSV ingestion.

A dataset is a directory holding one ``manifest.json`` plus one binary file
per class and split. Binary files are headerless little-endian float32,
row-major, one d-dimensional feature vector per row; the manifest carries
the dimension and the row counts, so a file's byte length must equal
``count * dim * 4`` exactly.

The manifest groups classes into sessions. Session ids must be contiguous
from 0 and a class label may appear in exactly one session. ``label_names``
is optional and purely informational.

In memory, features are float64 and labels int64. Reading a float32 file
and writing it back is byte-identical.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    NonFiniteError,
    ParseError,
    UnknownLabel,
    ValidationError,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
DTYPE_TOKEN = "f32le"
_ITEM_BYTES = 4


def _as_feature_matrix(vectors) -> np.ndarray:
    """Coerce input to a finite (n, d) float64 matrix."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(
            f"expected a 2-d array of feature rows, got ndim={arr.ndim}"
        )
    if arr.shape[1] < 1:
        raise DimensionMismatch("feature dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
        raise NonFiniteError(f"non-finite value in feature row {bad}")
    return arr


@dataclass(frozen=True)
class FeatureSet:
    """Labeled collection of feature vectors.

    Attributes
    ----------
    labels : (n,) int64 array
        Class label of each row. Non-negative.
    features : (n, d) float64 array
        One feature vector per row. Finite.

    Both arrays are marked read-only on construction.
    """

    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        features = _as_feature_matrix(self.features)
        if labels.ndim != 1:
            raise DimensionMismatch("labels must be a 1-d array")
        if labels.shape[0] != features.shape[0]:
            raise DimensionMismatch(
                f"{labels.shape[0]} labels for {features.shape[0]} feature rows"
            )
        if labels.size and labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        labels = labels.copy()
        features = features.copy()
        labels.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def class_labels(self) -> list[int]:
        """Distinct labels present, ascending."""
        return [int(v) for v in np.unique(self.labels)]

    def for_label(self, label: int) -> np.ndarray:
        """Feature rows of one class, in stored order."""
        return self.features[self.labels == int(label)]

    def counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    @staticmethod
    def from_blocks(blocks: Iterable[tuple[int, np.ndarray]]) -> "FeatureSet":
        """Assemble from ``(label, rows)`` pairs, concatenated in given order."""
        labels = []
        rows = []
        for label, arr in blocks:
            arr = _as_feature_matrix(arr)
            labels.append(np.full(arr.shape[0], int(label), dtype=np.int64))
            rows.append(arr)
        if not rows:
            raise EmptyInput("no blocks given")
        return FeatureSet(np.concatenate(labels), np.vstack(rows))


@dataclass(frozen=True)
class ClassEntry:
    """Manifest record for one class."""

    label: int
    train_file: str
    test_file: str
    train_count: int
    test_count: int


@dataclass(frozen=True)
class SessionEntry:
    """Manifest record for one session: the classes it introduces."""

    session_id: int
    classes: tuple[ClassEntry, ...]


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed and validated dataset manifest."""

    version: int
    dim: int
    dtype: str
    sessions: tuple[SessionEntry, ...]
    label_names: dict[int, str] = field(default_factory=dict)

    def entries(self) -> list[ClassEntry]:
        out = []
        for session in self.sessions:
            out.extend(session.classes)
        return out

    def labels(self) -> list[int]:
        return [e.label for e in self.entries()]

    def entry(self, label: int) -> ClassEntry:
        for e in self.entries():
            if e.label == int(label):
                return e
        raise UnknownLabel(f"label {label} not in manifest")

    def session_of(self, label: int) -> int:
        for session in self.sessions:
            if any(e.label == int(label) for e in session.classes):
                return session.session_id
        raise UnknownLabel(f"label {label} not in manifest")


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing required field '{key}'")
    value = obj[key]
    if kind is int:
        # bool is an int subclass; reject it explicitly
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"{where}: field '{key}' must be an integer")
    elif not isinstance(value, kind):
        raise ParseError(
            f"{where}: field '{key}' must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate ``manifest.json``.

    ``path`` may point at the manifest file or at the dataset directory.
    Raises :class:`ParseError` for malformed documents and
    :class:`ValidationError` for well-formed documents that violate the
    format rules (duplicate labels, wrong file sizes, empty training sets,
    non-contiguous session ids). A class with zero test rows is legal but
    draws a warning.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")

    version = _require(doc, "version", int, str(path))
    if version != MANIFEST_VERSION:
        raise ValidationError(f"{path}: unsupported manifest version {version}")
    dim = _require(doc, "dim", int, str(path))
    if dim < 1:
        raise ValidationError(f"{path}: dim must be >= 1, got {dim}")
    dtype = _require(doc, "dtype", str, str(path))
    if dtype != DTYPE_TOKEN:
        raise ValidationError(f"{path}: unsupported dtype '{dtype}'")
    raw_sessions = _require(doc, "sessions", list, str(path))
    if not raw_sessions:
        raise ValidationError(f"{path}: at least one session is required")

    label_names: dict[int, str] = {}
    if "label_names" in doc:
        raw_names = doc["label_names"]
        if not isinstance(raw_names, dict):
            raise ParseError(f"{path}: label_names must be an object")
        for k, v in raw_names.items():
            try:
                label_names[int(k)] = str(v)
            except ValueError as exc:
                raise ParseError(f"{path}: label_names key '{k}' is not an integer") from exc

    root = path.parent
    sessions = []
    seen_labels: dict[int, int] = {}
    for pos, raw in enumerate(raw_sessions):
        where = f"{path}: sessions[{pos}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: must be an object")
        sid = _require(raw, "session_id", int, where)
        raw_classes = _require(raw, "classes", list, where)
        if not raw_classes:
            raise ValidationError(f"{where}: session has no classes")
        classes = []
        for cpos, rawc in enumerate(raw_classes):
            cwhere = f"{where}.classes[{cpos}]"
            if not isinstance(rawc, dict):
                raise ParseError(f"{cwhere}: must be an object")
            label = _require(rawc, "label", int, cwhere)
            if label < 0:
                raise ValidationError(f"{cwhere}: label must be non-negative")
            if label in seen_labels:
                raise ValidationError(
                    f"{path}: label {label} appears in sessions "
                    f"{seen_labels[label]} and {sid}"
                )
            seen_labels[label] = sid
            entry = ClassEntry(
                label=label,
                train_file=_require(rawc, "train_file", str, cwhere),
                test_file=_require(rawc, "test_file", str, cwhere),
                train_count=_require(rawc, "train_count", int, cwhere),
                test_count=_require(rawc, "test_count", int, cwhere),
            )
            if entry.train_count < 1:
                raise ValidationError(
                    f"{cwhere}: class {label} has no training rows"
                )
            if entry.test_count < 0:
                raise ValidationError(f"{cwhere}: negative test_count")
            if entry.test_count == 0:
                warnings.warn(
                    f"class {label} has no test rows; it will not contribute "
                    "to accuracy metrics",
                    stacklevel=2,
                )
            for fname, count in (
                (entry.train_file, entry.train_count),
                (entry.test_file, entry.test_count),
            ):
                fpath = root / fname
                if not fpath.is_file():
                    raise ValidationError(f"{path}: missing feature file '{fname}'")
                expected = count * dim * _ITEM_BYTES
                actual = fpath.stat().st_size
                if actual != expected:
                    raise ValidationError(
                        f"{path}: '{fname}' is {actual} bytes, expected {expected} "
                        f"({count} rows x {dim} dims x {_ITEM_BYTES} bytes)"
                    )
            classes.append(entry)
        sessions.append(SessionEntry(session_id=sid, classes=tuple(classes)))

    ids = [s.session_id for s in sessions]
    if sorted(ids) != list(range(len(sessions))):
        raise ValidationError(
            f"{path}: session ids must be contiguous from 0, got {ids}"
        )
    sessions.sort(key=lambda s: s.session_id)
    return DatasetManifest(
        version=version,
        dim=dim,
        dtype=dtype,
        sessions=tuple(sessions),
        label_names=label_names,
    )


def read_feature_file(path: str | Path, dim: int, count: int) -> np.ndarray:
    """Read one class file into a (count, dim) float64 matrix.

    The file must hold exactly ``count * dim`` little-endian float32 values.
    Raises :class:`OSError` on missing or truncated files and
    :class:`NonFiniteError` (naming the first bad row) on NaN/inf payloads.
    """
    path = Path(path)
    expected = count * dim * _ITEM_BYTES
    data = path.read_bytes()
    if len(data) != expected:
        raise OSError(
            f"{path}: read {len(data)} bytes, expected {expected}"
        )
    flat = np.frombuffer(data, dtype="<f4")
    arr = flat.reshape(count, dim).astype(np.float64)
    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise NonFiniteError(f"{path}: non-finite value in row {bad}")
    return arr


def write_feature_file(rows, path: str | Path) -> None:
    """Write a (n, d) matrix as little-endian float32, row-major.

    Values are cast to float32; data that originated from a float32 file
    round-trips bit for bit.
    """
    arr = _as_feature_matrix(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr.astype("<f4").tofile(path)


def read_csv_features(path: str | Path) -> FeatureSet:
    """Read the CSV exchange form: header ``label,f0,...,f{d-1}``.

    Every row must carry an integer label and exactly d finite floats.
    Errors name the offending line number.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "label":
            raise ParseError(f"{path}: header must start with 'label,f0,...'")
        dim = len(header) - 1
        expected = ["label"] + [f"f{i}" for i in range(dim)]
        if header != expected:
            raise ParseError(
                f"{path}: header columns must be label,f0,...,f{dim - 1}"
            )
        labels = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise ParseError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {dim + 1}"
                )
            try:
                labels.append(int(row[0]))
            except ValueError:
                raise ParseError(
                    f"{path}: line {lineno}: label '{row[0]}' is not an integer"
                ) from None
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric feature") from None
            if not all(np.isfinite(values)):
                raise NonFiniteError(f"{path}: line {lineno}: non-finite feature")
            rows.append(values)
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return FeatureSet(np.asarray(labels, dtype=np.int64), np.asarray(rows))


class DatasetReader:
    """Random access to one dataset directory.

    All feature access funnels through :meth:`train_features` and
    :meth:`test_features`, so a subclass that wraps those two methods sees
    every read the protocols perform.
    """

    def __init__(self, root: str | Path, manifest: DatasetManifest | None = None):
        self.root = Path(root)
        self.manifest = manifest if manifest is not None else load_manifest(self.root)

    @property
    def dim(self) -> int:
        return self.manifest.dim

    def labels(self) -> list[int]:
        return self.manifest.labels()

    def session_labels(self, session_id: int) -> list[int]:
        for session in self.manifest.sessions:
            if session.session_id == session_id:
                return [e.label for e in session.classes]
        raise UnknownLabel(f"no session {session_id}")

    def n_sessions(self) -> int:
        return len(self.manifest.sessions)

    def session_of(self, label: int) -> int:
        return self.manifest.session_of(label)

    def train_features(self, label: int) -> np.ndarray:
        entry = self.manifest.entry(label)
        return read_feature_file(self.root / entry.train_file, self.dim, entry.train_count)

    def test_features(self, label: int) -> np.ndarray:
        entry = self.manifest.entry(label)
        return read_feature_file(self.root / entry.test_file, self.dim, entry.test_count)

    def train_set(self, labels: Sequence[int]) -> FeatureSet:
        return FeatureSet.from_blocks((l, self.train_features(l)) for l in labels)

    def test_set(self, labels: Sequence[int]) -> FeatureSet:
        blocks = []
        for label in labels:
            entry = self.manifest.entry(label)
            if entry.test_count == 0:
                continue
            blocks.append((label, self.test_features(label)))
        if not blocks:
            raise EmptyInput(f"no test rows among labels {list(labels)}")
        return FeatureSet.from_blocks(blocks)


def write_dataset(
    root: str | Path,
    dim: int,
    sessions: Sequence[Sequence[tuple[int, np.ndarray, np.ndarray]]],
    label_names: dict[int, str] | None = None,
) -> Path:
    """Write a dataset directory from per-session ``(label, train, test)`` blocks.

    Returns the manifest path. Layout: one file per class and split, named
    by label. Test blocks may be empty; train blocks must not be.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    doc_sessions = []
    for sid, blocks in enumerate(sessions):
        classes = []
        for label, train, test in blocks:
            train = _as_feature_matrix(train)
            test = np.zeros((0, dim)) if test is None or len(test) == 0 else _as_feature_matrix(test)
            if train.shape[1] != dim or (test.size and test.shape[1] != dim):
                raise DimensionMismatch(f"class {label}: rows are not {dim}-dimensional")
            if train.shape[0] < 1:
                raise ValidationError(f"class {label}: empty training block")
            train_file = f"class_{int(label):04d}_train.bin"
            test_file = f"class_{int(label):04d}_test.bin"
            write_feature_file(train, root / train_file)
            # an empty test file is legal; write zero bytes
            (root / test_file).write_bytes(
                test.astype("<f4").tobytes() if test.size else b""
            )
            classes.append(
                {
                    "label": int(label),
                    "train_file": train_file,
                    "test_file": test_file,
                    "train_count": int(train.shape[0]),
                    "test_count": int(test.shape[0]),
                }
            )
        doc_sessions.append({"session_id": sid, "classes": classes})
    doc = {
        "version": MANIFEST_VERSION,
        "dim": int(dim),
        "dtype": DTYPE_TOKEN,
        "sessions": doc_sessions,
    }
    if label_names:
        doc["label_names"] = {str(int(k)): str(v) for k, v in label_names.items()}
    manifest_path = root / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return manifest_path
