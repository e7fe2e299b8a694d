"""Linear classifier head trained with Adam on softmax cross-entropy.

The head maps d-dimensional features to one logit per known class. It
grows as sessions introduce classes: new rows start at zero and old rows
keep their weights. Training mixes each real mini-batch with ``alpha``
times as many replay rows drawn from a rolling pool, so one optimizer step
sees old and new classes together.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import seeds
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmptyInput,
    UnknownLabel,
    ValidationError,
)
from .store import FeatureSet

if TYPE_CHECKING:  # circular at runtime; sampling imports this module
    from .sampling import SyntheticBatch


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for one training call."""

    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 64
    alpha: int = 8
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ValidationError("lr must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValidationError("beta1 and beta2 must be in [0, 1)")
        if not self.eps > 0.0:
            raise ValidationError("eps must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")

    def with_(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class LinearClassifier:
    """Frozen linear head: ``logits = x @ weights.T + bias``.

    ``labels[i]`` names the class scored by row ``i``. Rows may appear in
    any order; prediction ties break toward the smallest label value.
    """

    labels: tuple[int, ...]
    weights: np.ndarray  # (C, d)
    bias: np.ndarray     # (C,)

    def __post_init__(self):
        labels = tuple(int(l) for l in self.labels)
        if len(set(labels)) != len(labels):
            raise DuplicateLabel("classifier labels must be unique")
        weights = np.asarray(self.weights, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] != len(labels):
            raise DimensionMismatch(
                f"weights must be ({len(labels)}, d), got {weights.shape}"
            )
        if bias.shape != (len(labels),):
            raise DimensionMismatch(f"bias must be ({len(labels)},)")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ValidationError("classifier parameters must be finite")
        weights = weights.copy()
        bias = bias.copy()
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def zeros(cls, dim: int, labels: Sequence[int]) -> "LinearClassifier":
        labels = tuple(int(l) for l in labels)
        return cls(labels, np.zeros((len(labels), dim)), np.zeros(len(labels)))

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def label_set(self) -> frozenset[int]:
        return frozenset(self.labels)

    def row_of(self, label: int) -> int:
        try:
            return self.labels.index(int(label))
        except ValueError:
            raise UnknownLabel(f"classifier head does not cover label {label}") from None

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (n, {self.dim}) input, got {x.shape}")
        return x @ self.weights.T + self.bias

    def predict(self, x) -> np.ndarray:
        """Predicted label per row; ties resolve to the smallest label."""
        if self.n_classes == 0:
            raise EmptyInput("classifier has no classes")
        z = self.logits(x)
        order = np.argsort(np.asarray(self.labels, dtype=np.int64), kind="stable")
        # argmax returns the first maximum, so scanning label-ascending
        # columns makes ties land on the smallest label
        idx = np.argmax(z[:, order], axis=1)
        return np.asarray(self.labels, dtype=np.int64)[order][idx]


def expand_head(clf: LinearClassifier, new_labels: Sequence[int]) -> LinearClassifier:
    """Append zero-initialized rows for new classes.

    Existing rows are untouched, so pre-expansion logits of old classes are
    identical. Duplicates, against existing labels or within the new ones,
    are rejected.
    """
    new_labels = [int(l) for l in new_labels]
    if len(set(new_labels)) != len(new_labels):
        raise DuplicateLabel(f"duplicate labels in expansion: {new_labels}")
    clash = set(new_labels) & clf.label_set()
    if clash:
        raise DuplicateLabel(f"labels already in head: {sorted(clash)}")
    if not new_labels:
        return clf
    weights = np.vstack([clf.weights, np.zeros((len(new_labels), clf.dim))])
    bias = np.concatenate([clf.bias, np.zeros(len(new_labels))])
    return LinearClassifier(clf.labels + tuple(new_labels), weights, bias)


def _loss_grad_arrays(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, rows: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy and exact gradients for target rows."""
    z = x @ weights.T + bias
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    n = x.shape[0]
    loss = float(np.mean(log_norm - z[np.arange(n), rows]))
    p = np.exp(z - log_norm[:, None])
    p[np.arange(n), rows] -= 1.0
    p /= n
    return loss, p.T @ x, p.sum(axis=0)


def loss_and_grad(
    clf: LinearClassifier, x, y
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Loss and (weight, bias) gradients of the head on a labeled batch.

    The softmax is computed with max-subtraction, so logits of any
    magnitude stay finite. At all-zero parameters the loss is ``log(C)``
    regardless of the input rows.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != clf.dim:
        raise DimensionMismatch(f"expected (n, {clf.dim}) input, got {x.shape}")
    if y.shape != (x.shape[0],):
        raise DimensionMismatch("one label per row required")
    if x.shape[0] == 0:
        raise EmptyInput("empty batch")
    rows = np.asarray([clf.row_of(l) for l in y], dtype=np.int64)
    loss, gw, gb = _loss_grad_arrays(clf.weights, clf.bias, x, rows)
    return loss, (gw, gb)


class _RollingMixer:
    """Serves replay rows in shuffled cycles without replacement.

    The pool is assembled in ascending label order, so the mixture drawn
    for a given seed does not depend on the order the batches were passed
    in. Each full pass reshuffles.
    """

    def __init__(
        self,
        batches: Sequence["SyntheticBatch"],
        row_of: dict[int, int],
        rng: np.random.Generator,
    ):
        ordered = sorted(batches, key=lambda b: b.label)
        self.x = np.vstack([b.vectors for b in ordered])
        self.rows = np.concatenate(
            [np.full(len(b), row_of[b.label], dtype=np.int64) for b in ordered]
        )
        self.n = self.x.shape[0]
        self.rng = rng
        self._perm = rng.permutation(self.n)
        self._pos = 0

    def draw(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            take = min(k - filled, self.n - self._pos)
            idx[filled : filled + take] = self._perm[self._pos : self._pos + take]
            filled += take
            self._pos += take
            if self._pos == self.n:
                self._perm = self.rng.permutation(self.n)
                self._pos = 0
        return self.x[idx], self.rows[idx]


def train(
    clf: LinearClassifier,
    new_data: FeatureSet,
    replay: Sequence["SyntheticBatch"],
    cfg: TrainConfig,
) -> LinearClassifier:
    """Train the head on new real data mixed with synthetic replay.

    Each epoch shuffles the real rows and walks them in mini-batches; every
    step appends ``alpha * batch_size`` replay rows drawn from the rolling
    pool. Adam runs with bias-corrected moments; the parameters after the
    final epoch are returned (no early stopping, no best-epoch selection).
    Training an empty head, or training with neither real nor replay rows,
    is an error. With no real rows the replay pool itself is walked as the
    epoch data, so a pure-replay refresh is possible.
    """
    if clf.n_classes == 0:
        raise EmptyInput("classifier has no classes to train")
    replay = list(replay)
    n_replay = sum(len(b) for b in replay)
    if len(new_data) == 0 and n_replay == 0:
        raise EmptyInput("no training rows: new data and replay are both empty")
    if len(new_data) and new_data.dim != clf.dim:
        raise DimensionMismatch("new data dimension does not match classifier")

    row_of = {label: i for i, label in enumerate(clf.labels)}
    for label in set(new_data.labels.tolist()) | {b.label for b in replay}:
        if label not in row_of:
            raise UnknownLabel(f"classifier head does not cover label {label}")

    if len(new_data):
        x = new_data.features
        rows = np.asarray([row_of[l] for l in new_data.labels], dtype=np.int64)
        mix_batches = replay
    else:
        # pure replay: the pool becomes the epoch data, nothing to mix
        ordered = sorted(replay, key=lambda b: b.label)
        x = np.vstack([b.vectors for b in ordered])
        rows = np.concatenate(
            [np.full(len(b), row_of[b.label], dtype=np.int64) for b in ordered]
        )
        mix_batches = []

    rng = seeds.stream(cfg.seed, seeds.TRAIN)
    mixer = (
        _RollingMixer(mix_batches, row_of, rng)
        if mix_batches and cfg.alpha > 0 and sum(len(b) for b in mix_batches) > 0
        else None
    )

    weights = clf.weights.copy()
    bias = clf.bias.copy()
    m_w = np.zeros_like(weights)
    v_w = np.zeros_like(weights)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    step = 0
    n = x.shape[0]

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x[idx]
            rb = rows[idx]
            if mixer is not None:
                xr, rr = mixer.draw(cfg.alpha * cfg.batch_size)
                xb = np.vstack([xb, xr])
                rb = np.concatenate([rb, rr])
            _, gw, gb = _loss_grad_arrays(weights, bias, xb, rb)
            step += 1
            m_w = cfg.beta1 * m_w + (1 - cfg.beta1) * gw
            v_w = cfg.beta2 * v_w + (1 - cfg.beta2) * gw * gw
            mhat = m_w / (1 - cfg.beta1**step)
            vhat = v_w / (1 - cfg.beta2**step)
            weights -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
            if cfg.use_bias:
                m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * gb
                v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * gb * gb
                mhat_b = m_b / (1 - cfg.beta1**step)
                vhat_b = v_b / (1 - cfg.beta2**step)
                bias -= cfg.lr * mhat_b / (np.sqrt(vhat_b) + cfg.eps)

    return LinearClassifier(clf.labels, weights, bias)
