"""Synthetic embedding benchmarks with controllable difficulty.

Classes are Gaussians with unit average variance (covariance eigenvalues
are drawn with condition number at most 10 and normalized to mean 1), so
``separation`` reads directly as the minimum distance between class means
in within-class standard deviations. Optional knobs: a hard covariance
rank below the dimension, and Student-t tails for non-Gaussian data.

Generation is fully seeded; regenerating into a fresh directory produces
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeds
from .errors import InfeasibleSpec, ParseError, ValidationError
from .store import DatasetReader, write_dataset

_PLACEMENT_TRIES = 400  # per class, before giving up on mean placement
_COND_MAX = 10.0


@dataclass(frozen=True)
class BenchSpec:
    """Shape of a synthetic benchmark.

    ``base_classes`` go into session 0 and each of ``n_increments``
    sessions adds ``increment_size`` classes; the schedule must fit in
    ``n_classes``. ``separation`` of 0 puts every class mean at the origin
    (chance-level data); ``rank`` restricts every class covariance to that
    many directions; ``tail_df`` replaces Gaussian rows with Student-t of
    that many degrees of freedom.
    """

    dim: int
    n_classes: int
    train_per_class: int
    test_per_class: int
    separation: float
    base_classes: int
    increment_size: int
    n_increments: int
    rank: int | None = None
    tail_df: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.train_per_class < 1:
            raise ValidationError("train_per_class must be >= 1")
        if self.test_per_class < 0:
            raise ValidationError("test_per_class must be >= 0")
        if self.separation < 0.0:
            raise ValidationError("separation must be >= 0")
        if self.base_classes < 1:
            raise ValidationError("base_classes must be >= 1")
        if self.increment_size < 1 or self.n_increments < 0:
            raise ValidationError("bad increment schedule")
        scheduled = self.base_classes + self.increment_size * self.n_increments
        if scheduled > self.n_classes:
            raise ValidationError(
                f"schedule needs {scheduled} classes, spec has {self.n_classes}"
            )
        if self.rank is not None and not 1 <= self.rank <= self.dim:
            raise ValidationError("rank must be in [1, dim]")
        if self.tail_df is not None and not self.tail_df > 2.0:
            raise ValidationError("tail_df must be > 2 so variances exist")

    @property
    def scheduled_classes(self) -> int:
        return self.base_classes + self.increment_size * self.n_increments

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchSpec":
        known = {
            "dim",
            "n_classes",
            "train_per_class",
            "test_per_class",
            "separation",
            "base_classes",
            "increment_size",
            "n_increments",
            "rank",
            "tail_df",
            "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ParseError(f"unknown benchmark fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ParseError(f"bad benchmark document: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: top level must be a JSON object")
        return cls.from_dict(doc)


def _place_means(spec: BenchSpec, rng: np.random.Generator) -> np.ndarray:
    """Sample class means pairwise at least ``separation`` apart.

    Candidates are Gaussian at a scale that starts near the separation and
    inflates when rejections pile up, so tight packings still resolve.
    """
    if spec.separation == 0.0:
        return np.zeros((spec.n_classes, spec.dim))
    means = np.zeros((spec.n_classes, spec.dim))
    scale = max(spec.separation, 1.0)
    for c in range(spec.n_classes):
        placed = False
        for attempt in range(_PLACEMENT_TRIES):
            cand = rng.standard_normal(spec.dim) * scale
            if c == 0 or np.linalg.norm(means[:c] - cand, axis=1).min() >= spec.separation:
                means[c] = cand
                placed = True
                break
            if (attempt + 1) % 100 == 0:
                scale *= 1.5
        if not placed:
            raise InfeasibleSpec(
                f"could not place mean {c} at separation {spec.separation} "
                f"in dimension {spec.dim}"
            )
    return means


def _class_covariance_factor(
    spec: BenchSpec, rng: np.random.Generator
) -> np.ndarray:
    """A (d, d) factor A with A @ A.T the class covariance.

    Eigenvalues are uniform on [1, 10] (condition <= 10), scaled to mean 1
    over the full dimension; with a rank cap the trailing eigenvalues are
    zeroed first and the survivors rescaled, keeping the total variance at
    ``dim``.
    """
    d = spec.dim
    eigs = rng.uniform(1.0, _COND_MAX, size=d)
    if spec.rank is not None and spec.rank < d:
        eigs[spec.rank :] = 0.0
    eigs *= d / eigs.sum()
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sqrt(eigs)


def _class_rows(
    n: int, mean: np.ndarray, factor: np.ndarray, tail_df: float | None,
    rng: np.random.Generator,
) -> np.ndarray:
    g = rng.standard_normal((n, mean.shape[0]))
    if tail_df is not None:
        # Student-t via normal over sqrt(chi2/df), one scale per row
        chi = rng.chisquare(tail_df, size=n)
        g = g / np.sqrt(chi / tail_df)[:, None]
    return mean + g @ factor.T


def generate(spec: BenchSpec, out_dir: str | Path) -> Path:
    """Write a benchmark dataset directory; returns the manifest path.

    Only the scheduled classes (base plus increments) are written; any
    surplus in ``n_classes`` still participates in mean placement, which
    makes the written classes no easier than ``n_classes`` implies.
    """
    rng = seeds.stream(spec.seed, seeds.DATA)
    means = _place_means(spec, rng)

    blocks = []
    for label in range(spec.scheduled_classes):
        class_rng = seeds.stream(spec.seed, seeds.DATA, label)
        factor = _class_covariance_factor(spec, class_rng)
        train = _class_rows(
            spec.train_per_class, means[label], factor, spec.tail_df, class_rng
        )
        test = (
            _class_rows(
                spec.test_per_class, means[label], factor, spec.tail_df, class_rng
            )
            if spec.test_per_class
            else np.zeros((0, spec.dim))
        )
        blocks.append((label, train, test))

    sessions = [blocks[: spec.base_classes]]
    at = spec.base_classes
    for _ in range(spec.n_increments):
        sessions.append(blocks[at : at + spec.increment_size])
        at += spec.increment_size
    return write_dataset(out_dir, spec.dim, sessions)


def nearest_mean_oracle(dataset_root: str | Path) -> float:
    """Accuracy (percent) of classifying test rows by the nearest train mean.

    A sanity yardstick for generated benchmarks: high for well-separated
    classes, near chance when the means coincide.
    """
    reader = DatasetReader(dataset_root)
    labels = reader.labels()
    means = np.stack([reader.train_features(l).mean(axis=0) for l in labels])
    test = reader.test_set(labels)
    d2 = ((test.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    preds = np.asarray(labels, dtype=np.int64)[np.argmin(d2, axis=1)]
    return 100.0 * float((preds == test.labels).mean())
