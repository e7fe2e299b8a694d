"""Binary container for prototype stores and classifier heads.

One file holds a fixed header (magic, format version, feature dimension,
record count) followed by typed records: full-covariance prototypes,
reduced prototypes (basis plus reduced moments), and at most one
classifier head. All integers are little-endian unsigned; all floating
point payloads are little-endian float32, so prototypes survive a
round-trip within float32 precision and a float32-clean store survives it
bit for bit.
"""

from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np

from .classifier import LinearClassifier
from .errors import ParseError, ValidationError
from .prototypes import ClassPrototype, PrototypeStore

_MAGIC = b"PRST"
_VERSION = 1
_FULL, _REDUCED, _CLASSIFIER = 1, 2, 3


def _pack_f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _take(buf: memoryview, at: int, n: int, path, what: str) -> tuple[memoryview, int]:
    if at + n > len(buf):
        raise ParseError(f"{path}: truncated while reading {what}")
    return buf[at : at + n], at + n


def _read_f32(buf: memoryview, at: int, count: int, path, what: str):
    raw, at = _take(buf, at, count * 4, path, what)
    return np.frombuffer(raw, dtype="<f4").astype(np.float64), at


def _read_u32(buf: memoryview, at: int, path, what: str) -> tuple[int, int]:
    raw, at = _take(buf, at, 4, path, what)
    return struct.unpack("<I", raw)[0], at


def save_state(
    path: str | Path,
    store: PrototypeStore,
    classifier: LinearClassifier | None = None,
) -> Path:
    """Write all prototypes (ascending label order) and an optional head."""
    path = Path(path)
    parts = []
    n_records = len(store) + (1 if classifier is not None else 0)
    parts.append(_MAGIC)
    parts.append(struct.pack("<III", _VERSION, store.dim, n_records))
    for p in store.prototypes():
        if p.reduced:
            parts.append(struct.pack("<BIII", _REDUCED, p.label, p.sample_count, p.rank))
            parts.append(_pack_f32(p.mean))
            parts.append(_pack_f32(p.basis))
            parts.append(_pack_f32(p.reduced_mean))
            parts.append(_pack_f32(p.reduced_cov))
        else:
            parts.append(struct.pack("<BII", _FULL, p.label, p.sample_count))
            parts.append(_pack_f32(p.mean))
            parts.append(_pack_f32(p.cov))
    if classifier is not None:
        if classifier.dim != store.dim:
            raise ValidationError(
                f"classifier dim {classifier.dim} does not match store dim {store.dim}"
            )
        parts.append(struct.pack("<BIB", _CLASSIFIER, classifier.n_classes, 1))
        parts.append(
            struct.pack(f"<{classifier.n_classes}I", *classifier.labels)
        )
        parts.append(_pack_f32(classifier.weights))
        parts.append(_pack_f32(classifier.bias))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))
    return path


def _psd_repair(c: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues introduced by float32 rounding."""
    w, u = np.linalg.eigh((c + c.T) / 2.0)
    return (u * np.clip(w, 0.0, None)) @ u.T


def load_state(path: str | Path) -> tuple[PrototypeStore, LinearClassifier | None]:
    """Read a container written by :func:`save_state`."""
    path = Path(path)
    buf = memoryview(path.read_bytes())
    at = 0
    magic, at = _take(buf, at, 4, path, "magic")
    if bytes(magic) != _MAGIC:
        raise ParseError(f"{path}: not a prototype container")
    version, at = _read_u32(buf, at, path, "version")
    if version != _VERSION:
        raise ValidationError(f"{path}: unsupported container version {version}")
    dim, at = _read_u32(buf, at, path, "dim")
    n_records, at = _read_u32(buf, at, path, "record count")

    store = PrototypeStore(dim)
    clf: LinearClassifier | None = None
    for rec in range(n_records):
        raw, at = _take(buf, at, 1, path, f"record {rec} type")
        rtype = raw[0]
        if rtype in (_FULL, _REDUCED):
            label, at = _read_u32(buf, at, path, "label")
            count, at = _read_u32(buf, at, path, "sample count")
            if rtype == _REDUCED:
                rank, at = _read_u32(buf, at, path, "rank")
            mean, at = _read_f32(buf, at, dim, path, "mean")
            if rtype == _FULL:
                cov, at = _read_f32(buf, at, dim * dim, path, "covariance")
                store.add(
                    ClassPrototype(
                        label=label,
                        mean=mean,
                        cov=cov.reshape(dim, dim),
                        sample_count=count,
                    )
                )
            else:
                basis, at = _read_f32(buf, at, dim * rank, path, "basis")
                rmean, at = _read_f32(buf, at, rank, path, "reduced mean")
                rcov, at = _read_f32(buf, at, rank * rank, path, "reduced covariance")
                basis = basis.reshape(dim, rank)
                rcov = rcov.reshape(rank, rank)
                try:
                    proto = ClassPrototype(
                        label=label,
                        mean=mean,
                        cov=basis @ rcov @ basis.T,
                        sample_count=count,
                        basis=basis,
                        reduced_mean=rmean,
                        reduced_cov=rcov,
                    )
                except ValidationError:
                    # float32 rounding can push a stored covariance just
                    # past the PSD tolerance; repair and retry once
                    warnings.warn(
                        f"{path}: repairing rounding-degraded covariance of "
                        f"class {label}",
                        stacklevel=2,
                    )
                    rcov = _psd_repair(rcov)
                    proto = ClassPrototype(
                        label=label,
                        mean=mean,
                        cov=basis @ rcov @ basis.T,
                        sample_count=count,
                        basis=basis,
                        reduced_mean=rmean,
                        reduced_cov=rcov,
                    )
                store.add(proto)
        elif rtype == _CLASSIFIER:
            if clf is not None:
                raise ParseError(f"{path}: more than one classifier record")
            n_classes, at = _read_u32(buf, at, path, "class count")
            raw, at = _take(buf, at, 1, path, "bias flag")
            labels_raw, at = _take(buf, at, 4 * n_classes, path, "labels")
            labels = struct.unpack(f"<{n_classes}I", labels_raw)
            weights, at = _read_f32(buf, at, n_classes * dim, path, "weights")
            bias, at = _read_f32(buf, at, n_classes, path, "bias")
            clf = LinearClassifier(labels, weights.reshape(n_classes, dim), bias)
        else:
            raise ParseError(f"{path}: unknown record type {rtype}")
    if at != len(buf):
        raise ParseError(f"{path}: {len(buf) - at} trailing bytes")
    return store, clf
