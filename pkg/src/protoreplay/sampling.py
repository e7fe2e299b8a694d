"""Synthetic feature generation: Gaussian draws, filtering, replay, augmentation.

Replay pools are drawn from stored class prototypes and screened by the
previous classifier: a synthetic vector survives only if that classifier
assigns it to its own class. Few-shot augmentation instead screens
candidates by Mahalanobis distance to every other class and re-estimates
the class prototype from the survivors before drawing the final synthetic
rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import seeds
from .classifier import LinearClassifier
from .errors import EmptyInput, UnknownLabel, ValidationError
from .prototypes import (
    ClassPrototype,
    PrototypeStore,
    fit_prototype,
    mahalanobis_many,
)
from .store import _as_feature_matrix


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for synthetic feature generation.

    ``replay_per_class`` synthetic rows are kept per class, screened out of
    ``candidate_pool`` raw draws per round. ``beta`` is the starting
    Mahalanobis acceptance radius for augmentation; it decays by
    ``beta_decay`` whenever too few candidates survive, and once it falls
    below ``beta_floor`` every candidate is accepted. ``max_filter_rounds``
    caps the classifier-filter top-up rounds during replay.
    """

    replay_per_class: int = 100
    candidate_pool: int = 300
    beta: float = 30.0
    beta_decay: float = 0.9
    beta_floor: float = 1e-3
    max_filter_rounds: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.replay_per_class < 1:
            raise ValidationError("replay_per_class must be >= 1")
        if self.candidate_pool < self.replay_per_class:
            raise ValidationError(
                f"candidate_pool ({self.candidate_pool}) must be >= "
                f"replay_per_class ({self.replay_per_class})"
            )
        if not self.beta > 0.0:
            raise ValidationError("beta must be positive")
        if not 0.0 < self.beta_decay < 1.0:
            raise ValidationError("beta_decay must be in (0, 1)")
        if not self.beta_floor > 0.0:
            raise ValidationError("beta_floor must be positive")
        if self.max_filter_rounds < 0:
            raise ValidationError("max_filter_rounds must be >= 0")

    def with_(self, **kwargs) -> "SamplerConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SyntheticBatch:
    """Synthetic (or mixed real+synthetic) rows for one class.

    ``provenance`` records which pipeline produced the batch ("replay" or
    "augment"). ``unfiltered_fill`` counts rows that bypassed the
    classifier filter because filtering could not reach the target size;
    downstream code surfaces it as a warning counter.
    """

    label: int
    vectors: np.ndarray
    provenance: str
    unfiltered_fill: int = 0

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValidationError("batch vectors must be (n, d)")
        vectors = vectors.copy()
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "label", int(self.label))
        if self.provenance not in ("replay", "augment"):
            raise ValidationError(f"unknown provenance '{self.provenance}'")
        if self.unfiltered_fill < 0 or self.unfiltered_fill > len(vectors):
            raise ValidationError("unfiltered_fill out of range")

    def __len__(self) -> int:
        return int(self.vectors.shape[0])


def sample_gaussian(
    prototype: ClassPrototype,
    n: int,
    rng: np.random.Generator,
    *,
    provenance: str = "replay",
) -> SyntheticBatch:
    """Draw ``n`` vectors from a prototype's Gaussian.

    The covariance is factored by symmetric eigendecomposition with
    negative eigenvalues clamped to zero, so nearly-PSD inputs are handled
    gracefully. Reduced prototypes are sampled in their own coordinates and
    mapped back to the full space; a rank-0 prototype yields ``n`` copies
    of the mean.
    """
    if n < 1:
        raise EmptyInput("need n >= 1 samples")
    if prototype.reduced:
        r = prototype.rank
        if r == 0:
            x = np.tile(prototype.mean, (n, 1))
        else:
            y = _draw(prototype.reduced_mean, prototype.reduced_cov, n, rng)
            x = prototype.mean + y @ prototype.basis.T
    else:
        x = _draw(prototype.mean, prototype.cov, n, rng)
    return SyntheticBatch(label=prototype.label, vectors=x, provenance=provenance)


def _draw(mean: np.ndarray, cov: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    w, u = np.linalg.eigh((cov + cov.T) / 2.0)
    w = np.clip(w, 0.0, None)
    factor = u * np.sqrt(w)
    g = rng.standard_normal((n, mean.shape[0]))
    return mean + g @ factor.T


def filter_by_classifier(batch: SyntheticBatch, clf: LinearClassifier) -> SyntheticBatch:
    """Keep only rows the classifier assigns to the batch's own label.

    The result may be empty; callers decide how to top up. Raises
    :class:`UnknownLabel` when the classifier's head does not include the
    batch label at all.
    """
    if batch.label not in clf.label_set():
        raise UnknownLabel(f"classifier head does not cover label {batch.label}")
    if len(batch) == 0:
        return batch
    preds = clf.predict(batch.vectors)
    kept = batch.vectors[preds == batch.label]
    return SyntheticBatch(
        label=batch.label,
        vectors=kept,
        provenance=batch.provenance,
        unfiltered_fill=0,
    )


def synthetic_replay(
    store: PrototypeStore,
    prev_clf: LinearClassifier,
    cfg: SamplerConfig,
) -> list[SyntheticBatch]:
    """Build the replay pool for every stored class.

    Per class: draw ``candidate_pool`` vectors from its prototype, filter
    with the previous classifier, and top up with further rounds (at most
    ``max_filter_rounds``) until ``replay_per_class`` survivors exist.
    Surplus survivors are uniformly subsampled. If the rounds are exhausted
    the remainder is filled with unfiltered draws rather than failing; the
    fill size is recorded on the batch.

    Classes are processed in ascending label order with independent
    per-class streams, so results do not depend on insertion order.
    """
    if len(store) == 0:
        raise EmptyInput("prototype store is empty")
    covered = prev_clf.label_set()
    missing = [l for l in store.labels() if l not in covered]
    if missing:
        raise UnknownLabel(f"classifier head does not cover stored labels {missing}")

    out = []
    for label in store.labels():
        rng = seeds.stream(cfg.seed, seeds.REPLAY, label)
        prototype = store.get(label)
        chunks: list[np.ndarray] = []
        total = 0
        rounds_left = cfg.max_filter_rounds
        while True:
            raw = sample_gaussian(prototype, cfg.candidate_pool, rng)
            kept = filter_by_classifier(raw, prev_clf).vectors
            if len(kept):
                chunks.append(kept)
                total += len(kept)
            if total >= cfg.replay_per_class or rounds_left == 0:
                break
            rounds_left -= 1
        if total >= cfg.replay_per_class:
            survivors = np.vstack(chunks)
            pick = rng.choice(total, size=cfg.replay_per_class, replace=False)
            pick.sort()
            vectors = survivors[pick]
            fill = 0
        else:
            fill = cfg.replay_per_class - total
            extra = sample_gaussian(prototype, fill, rng).vectors
            vectors = np.vstack(chunks + [extra]) if chunks else extra
        out.append(
            SyntheticBatch(
                label=label,
                vectors=vectors,
                provenance="replay",
                unfiltered_fill=fill,
            )
        )
    return out


def _min_mahalanobis(vectors: np.ndarray, others: Sequence[ClassPrototype]) -> np.ndarray:
    dmin = np.full(vectors.shape[0], np.inf)
    for p in others:
        dmin = np.minimum(dmin, mahalanobis_many(vectors, p))
    return dmin


def filter_by_mahalanobis(
    batch: SyntheticBatch,
    others: Sequence[ClassPrototype] | PrototypeStore,
    beta: float,
) -> SyntheticBatch:
    """Keep rows at Mahalanobis distance >= ``beta`` from every other class.

    ``others`` must not contain the batch's own class. With no other
    classes, or ``beta`` = 0, everything passes.
    """
    prototypes = others.prototypes() if isinstance(others, PrototypeStore) else list(others)
    if any(p.label == batch.label for p in prototypes):
        raise ValidationError(
            f"own class {batch.label} must not be among the rejection prototypes"
        )
    if beta < 0.0:
        raise ValidationError("beta must be >= 0")
    if len(batch) == 0 or not prototypes:
        return batch
    dmin = _min_mahalanobis(batch.vectors, prototypes)
    return SyntheticBatch(
        label=batch.label,
        vectors=batch.vectors[dmin >= beta],
        provenance=batch.provenance,
        unfiltered_fill=0,
    )


def synthetic_augment(
    label: int,
    real,
    others: Sequence[ClassPrototype] | PrototypeStore,
    cfg: SamplerConfig,
    target_n: int,
    *,
    prototype_mode: str = "auto",
) -> SyntheticBatch:
    """Expand a few-shot class into a full training pool.

    A naive prototype fitted from the ``real`` rows proposes
    ``candidate_pool`` candidates. Candidates too close to any other class
    (minimum Mahalanobis distance below ``beta``) are rejected; whenever
    fewer than ``target_n`` survive, ``beta`` decays by ``beta_decay`` and
    the same candidates are filtered again, accepting everything once
    ``beta`` falls below ``beta_floor``. The survivors calibrate a second
    prototype, from which the final ``target_n`` synthetic rows are drawn.

    Returns the real rows followed by the synthetic rows, labeled as one
    batch.
    """
    real = _as_feature_matrix(real)
    if real.shape[0] < 1:
        raise EmptyInput("need at least one real row to augment")
    if target_n < 1:
        raise ValidationError("target_n must be >= 1")
    prototypes = others.prototypes() if isinstance(others, PrototypeStore) else list(others)
    if any(p.label == int(label) for p in prototypes):
        raise ValidationError(
            f"own class {label} must not be among the rejection prototypes"
        )

    rng = seeds.stream(cfg.seed, seeds.AUGMENT, int(label))
    naive = fit_prototype(label, real, mode=prototype_mode)
    pool = max(cfg.candidate_pool, target_n)
    candidates = sample_gaussian(naive, pool, rng, provenance="augment").vectors

    if prototypes:
        dmin = _min_mahalanobis(candidates, prototypes)
        beta = cfg.beta
        survivors = candidates[dmin >= beta]
        while survivors.shape[0] < target_n:
            beta *= cfg.beta_decay
            if beta < cfg.beta_floor:
                survivors = candidates
                break
            survivors = candidates[dmin >= beta]
    else:
        survivors = candidates

    calibrated = fit_prototype(label, survivors, mode=prototype_mode)
    synthetic = sample_gaussian(calibrated, target_n, rng, provenance="augment").vectors
    return SyntheticBatch(
        label=label,
        vectors=np.vstack([real, synthetic]),
        provenance="augment",
    )
