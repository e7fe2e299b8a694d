"""Class-incremental evaluation protocols and their metrics.

A run walks a session plan: the base session trains the classifier head
from scratch on full data, and each incremental session extends the head
with new classes, training on the session's (possibly few-shot, possibly
augmented) data mixed with synthetic replay of everything learned before.
Real features of a class are touched only during its own session; from
then on the class exists solely as a stored prototype. After every session
the classifier is scored on the test rows of all classes seen so far.

Metrics per session: G is global accuracy over seen classes, L is local
accuracy over the session's new classes, and the forgetting measure
IFM = 100 * |L - G| / (L + G) captures their imbalance. SAD is the drop in
G from the base session to the final one.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeds
from .checkpoint import save_state
from .classifier import LinearClassifier, TrainConfig, expand_head, train
from .errors import (
    EmptyInput,
    EmptyTestSet,
    InsufficientShots,
    TooFewSessions,
    ValidationError,
)
from .prototypes import PrototypeStore, fit_prototype
from .sampling import SamplerConfig, synthetic_augment, synthetic_replay
from .store import DatasetManifest, DatasetReader, FeatureSet

REPORT_SCHEMA_VERSION = 1


def compute_ifm(local: float, global_: float) -> float:
    """Imbalance between local and global accuracy, in percent of their sum.

    Zero when the two agree; approaches 100 when one of them collapses.
    Defined as 0 when both are 0.
    """
    if local < 0.0 or global_ < 0.0:
        raise ValidationError("accuracies must be non-negative")
    total = local + global_
    if total == 0.0:
        return 0.0
    # rounding of 100 * x / x can overshoot 100 by one ulp; clamp to the
    # mathematical range
    return min(100.0 * abs(local - global_) / total, 100.0)


def compute_sad(g_values: Sequence[float]) -> float:
    """Accuracy drop from the first session to the last."""
    g_values = list(g_values)
    if not g_values:
        raise EmptyInput("no sessions")
    return float(g_values[0]) - float(g_values[-1])


@dataclass(frozen=True)
class MetricsRecord:
    """Evaluation outcome of one session."""

    session_id: int
    g: float
    l: float
    ifm: float
    counts: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in (("g", self.g), ("l", self.l)):
            if not 0.0 <= value <= 100.0:
                raise ValidationError(f"{name} must be in [0, 100], got {value}")
        if abs(self.ifm - compute_ifm(self.l, self.g)) > 1e-9:
            raise ValidationError("ifm is inconsistent with l and g")


def evaluate(
    clf: LinearClassifier,
    test: FeatureSet,
    seen: Sequence[int],
    novel: Sequence[int],
    session_id: int = 0,
) -> MetricsRecord:
    """Score a classifier on the test rows of the classes seen so far.

    ``novel`` (the session's own classes) must be a subset of ``seen``;
    rows with labels outside ``seen`` are excluded with a warning. For the
    base session pass ``novel = seen``, which makes L equal G and the
    imbalance 0 by construction.
    """
    seen_set = {int(l) for l in seen}
    novel_set = {int(l) for l in novel}
    if not novel_set:
        raise ValidationError("novel class set is empty")
    if not novel_set <= seen_set:
        raise ValidationError("novel classes must be a subset of seen classes")
    head = clf.label_set()
    missing = seen_set - head
    if missing:
        raise ValidationError(f"classifier head is missing seen classes {sorted(missing)}")

    mask = np.isin(test.labels, sorted(seen_set))
    excluded = int(len(test) - mask.sum())
    if excluded:
        warnings.warn(
            f"{excluded} test rows belong to classes outside the seen set; excluded",
            stacklevel=2,
        )
    labels = test.labels[mask]
    if labels.size == 0:
        raise EmptyTestSet("no test rows for any seen class")
    preds = clf.predict(test.features[mask])
    correct = preds == labels

    counts: dict[int, tuple[int, int]] = {}
    for label in sorted(seen_set):
        sel = labels == label
        counts[label] = (int(correct[sel].sum()), int(sel.sum()))

    g = 100.0 * float(correct.mean())
    novel_mask = np.isin(labels, sorted(novel_set))
    if not novel_mask.any():
        raise EmptyTestSet("no test rows for the session's novel classes")
    l = 100.0 * float(correct[novel_mask].mean())
    return MetricsRecord(
        session_id=int(session_id),
        g=g,
        l=l,
        ifm=compute_ifm(l, g),
        counts=counts,
    )


@dataclass(frozen=True)
class SessionPlan:
    """Which classes arrive when, and which trial seeds to run.

    ``shuffle_classes`` re-deals the incremental classes into a fresh
    random order per trial (increment sizes are preserved); the base
    session is never shuffled. Few-shot runs keep the plan order fixed and
    vary only the shot selection across trials.
    """

    base_classes: tuple[int, ...]
    increments: tuple[tuple[int, ...], ...]
    trial_seeds: tuple[int, ...]
    shots: int | None = None
    shuffle_classes: bool = True
    class_order_seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        base = tuple(int(l) for l in self.base_classes)
        incs = tuple(tuple(int(l) for l in inc) for inc in self.increments)
        trial_seeds = tuple(int(s) for s in self.trial_seeds)
        object.__setattr__(self, "base_classes", base)
        object.__setattr__(self, "increments", incs)
        object.__setattr__(self, "trial_seeds", trial_seeds)
        if self.class_order_seeds is not None:
            cos = tuple(int(s) for s in self.class_order_seeds)
            object.__setattr__(self, "class_order_seeds", cos)
            if len(cos) != len(trial_seeds):
                raise ValidationError("need one class_order_seed per trial")
        if not base:
            raise TooFewSessions("plan has no base session classes")
        if any(not inc for inc in incs):
            raise ValidationError("every increment must hold at least one class")
        flat = list(base) + [l for inc in incs for l in inc]
        if len(set(flat)) != len(flat):
            raise ValidationError("a class may appear in only one session")
        if not trial_seeds:
            raise ValidationError("at least one trial seed is required")
        if self.shots is not None and self.shots < 1:
            raise ValidationError("shots must be >= 1 when given")

    @property
    def n_sessions(self) -> int:
        return 1 + len(self.increments)

    @classmethod
    def from_manifest(
        cls,
        manifest: DatasetManifest,
        trial_seeds: Sequence[int],
        *,
        shots: int | None = None,
        shuffle_classes: bool = True,
    ) -> "SessionPlan":
        """Adopt the session grouping recorded in a dataset manifest."""
        sessions = manifest.sessions
        if not sessions:
            raise TooFewSessions("manifest has no sessions")
        base = tuple(e.label for e in sessions[0].classes)
        incs = tuple(tuple(e.label for e in s.classes) for s in sessions[1:])
        return cls(
            base_classes=base,
            increments=incs,
            trial_seeds=tuple(trial_seeds),
            shots=shots,
            shuffle_classes=shuffle_classes,
        )


@dataclass(frozen=True)
class TrialResult:
    """All per-session records of one trial, plus summary scalars."""

    index: int
    seed: int
    class_order: tuple[tuple[int, ...], ...]
    sessions: tuple[MetricsRecord, ...]
    warnings: dict[str, int] = field(default_factory=dict)

    @property
    def base_g(self) -> float:
        return self.sessions[0].g

    @property
    def final_g(self) -> float:
        return self.sessions[-1].g

    @property
    def mean_g(self) -> float:
        return float(np.mean([r.g for r in self.sessions]))

    @property
    def mean_ifm(self) -> float | None:
        """Mean imbalance over incremental sessions; None with no increments."""
        tail = [r.ifm for r in self.sessions[1:]]
        return float(np.mean(tail)) if tail else None

    @property
    def sad(self) -> float:
        return compute_sad([r.g for r in self.sessions])


def _mean_std(values: list[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=0))}


@dataclass(frozen=True)
class RunReport:
    """Complete, reproducible record of one multi-trial run."""

    protocol: str
    dim: int
    plan: SessionPlan
    sampler: SamplerConfig
    train: TrainConfig
    prototype_mode: str
    augment: bool
    trials: tuple[TrialResult, ...]

    def aggregate(self) -> dict[str, dict[str, float] | None]:
        """Across-trial mean and population std of each summary metric."""
        out: dict[str, dict[str, float] | None] = {}
        for name in ("base_g", "final_g", "mean_g", "sad"):
            out[name] = _mean_std([getattr(t, name) for t in self.trials])
        ifms = [t.mean_ifm for t in self.trials]
        out["mean_ifm"] = None if any(v is None for v in ifms) else _mean_std(ifms)
        return out

    def to_dict(self) -> dict:
        """Plain-python document with deterministic key and element order."""
        plan = {
            "base_classes": list(self.plan.base_classes),
            "increments": [list(inc) for inc in self.plan.increments],
            "trial_seeds": list(self.plan.trial_seeds),
            "shots": self.plan.shots,
            "shuffle_classes": self.plan.shuffle_classes,
        }
        sampler = {
            "replay_per_class": self.sampler.replay_per_class,
            "candidate_pool": self.sampler.candidate_pool,
            "beta": self.sampler.beta,
            "beta_decay": self.sampler.beta_decay,
            "beta_floor": self.sampler.beta_floor,
            "max_filter_rounds": self.sampler.max_filter_rounds,
        }
        train_doc = {
            "lr": self.train.lr,
            "beta1": self.train.beta1,
            "beta2": self.train.beta2,
            "eps": self.train.eps,
            "epochs": self.train.epochs,
            "batch_size": self.train.batch_size,
            "alpha": self.train.alpha,
            "use_bias": self.train.use_bias,
        }
        trials = []
        for t in self.trials:
            sessions = []
            for rec in t.sessions:
                sessions.append(
                    {
                        "session": rec.session_id,
                        "g": rec.g,
                        "l": rec.l,
                        "ifm": rec.ifm,
                        "counts": {
                            str(label): [c, n] for label, (c, n) in rec.counts.items()
                        },
                    }
                )
            trials.append(
                {
                    "index": t.index,
                    "seed": t.seed,
                    "class_order": [list(inc) for inc in t.class_order],
                    "sessions": sessions,
                    "base_g": t.base_g,
                    "final_g": t.final_g,
                    "mean_g": t.mean_g,
                    "mean_ifm": t.mean_ifm,
                    "sad": t.sad,
                    "warnings": dict(sorted(t.warnings.items())),
                }
            )
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "protocol": self.protocol,
            "dim": self.dim,
            "prototype_mode": self.prototype_mode,
            "augment": self.augment,
            "plan": plan,
            "sampler": sampler,
            "train": train_doc,
            "trials": trials,
            "aggregate": self.aggregate(),
        }

    def csv_rows(self) -> list[list]:
        """Long-form per-session rows: trial, seed, session, g, l, ifm."""
        rows: list[list] = [["trial", "seed", "session", "g", "l", "ifm"]]
        for t in self.trials:
            for rec in t.sessions:
                rows.append(
                    [t.index, t.seed, rec.session_id, rec.g, rec.l, rec.ifm]
                )
        return rows


def _resolve_order(plan: SessionPlan, trial_index: int) -> tuple[tuple[int, ...], ...]:
    """Class order for one trial: the plan's, or a seeded re-deal of it."""
    if not plan.increments or not plan.shuffle_classes or plan.shots is not None:
        return plan.increments
    order_seed = (
        plan.class_order_seeds[trial_index]
        if plan.class_order_seeds is not None
        else plan.trial_seeds[trial_index]
    )
    rng = seeds.stream(order_seed, seeds.ORDER)
    pool = [l for inc in plan.increments for l in inc]
    perm = rng.permutation(len(pool))
    dealt = [pool[i] for i in perm]
    out = []
    at = 0
    for inc in plan.increments:
        out.append(tuple(dealt[at : at + len(inc)]))
        at += len(inc)
    return tuple(out)


def _run_trial(
    reader: DatasetReader,
    trial_index: int,
    trial_seed: int,
    base: tuple[int, ...],
    increments: tuple[tuple[int, ...], ...],
    sampler_cfg: SamplerConfig,
    train_cfg: TrainConfig,
    shots: int | None,
    augment: bool,
    prototype_mode: str,
    state_path: Path | None = None,
) -> TrialResult:
    store = PrototypeStore(reader.dim)
    clf = LinearClassifier.zeros(reader.dim, [])
    warn_counts = {"prototype_filter_empty": 0, "unfiltered_replay_fill": 0}
    records: list[MetricsRecord] = []
    seen: list[int] = []

    for session_id, session_labels in enumerate((base,) + increments):
        session_seed = seeds.subseed(trial_seed, session_id)

        # each class's real features are read here, once, and nowhere else
        pools: dict[int, np.ndarray] = {}
        for label in session_labels:
            arr = reader.train_features(label)
            if shots is not None and session_id > 0:
                if arr.shape[0] < shots:
                    raise InsufficientShots(
                        f"class {label} has {arr.shape[0]} training rows, "
                        f"need {shots} shots"
                    )
                shot_rng = seeds.stream(trial_seed, seeds.SHOTS, label)
                idx = np.sort(
                    shot_rng.choice(arr.shape[0], size=shots, replace=False)
                )
                arr = arr[idx]
            pools[label] = arr

        session_sampler = sampler_cfg.with_(seed=session_seed)

        if augment and shots is not None and session_id > 0:
            # reject candidates near every other class: the ones already
            # stored, plus naive prototypes of the session's sibling classes
            naive = {
                label: fit_prototype(label, pools[label], mode=prototype_mode)
                for label in session_labels
            }
            augmented: dict[int, np.ndarray] = {}
            for label in session_labels:
                others = store.prototypes() + [
                    naive[j] for j in session_labels if j != label
                ]
                batch = synthetic_augment(
                    label,
                    pools[label],
                    others,
                    session_sampler,
                    target_n=sampler_cfg.replay_per_class,
                    prototype_mode=prototype_mode,
                )
                augmented[label] = batch.vectors
            pools = augmented

        new_data = FeatureSet.from_blocks((l, pools[l]) for l in session_labels)

        if session_id == 0:
            replay = []
        else:
            replay = synthetic_replay(store, clf, session_sampler)
            warn_counts["unfiltered_replay_fill"] += sum(
                b.unfiltered_fill for b in replay
            )

        clf = expand_head(clf, session_labels)
        clf = train(clf, new_data, replay, train_cfg.with_(seed=session_seed))

        seen.extend(session_labels)
        try:
            test = reader.test_set(seen)
        except EmptyInput as exc:
            raise EmptyTestSet(str(exc)) from exc
        records.append(
            evaluate(clf, test, seen, novel=session_labels, session_id=session_id)
        )

        # freeze the session's classes into prototypes, keeping only rows
        # the just-trained classifier credits to their own class
        for label in session_labels:
            vecs = pools[label]
            kept = vecs[clf.predict(vecs) == label]
            if kept.shape[0] == 0:
                warn_counts["prototype_filter_empty"] += 1
                kept = vecs
            store.add(fit_prototype(label, kept, mode=prototype_mode))

    if state_path is not None:
        save_state(state_path, store, clf)

    return TrialResult(
        index=trial_index,
        seed=trial_seed,
        class_order=increments,
        sessions=tuple(records),
        warnings=warn_counts,
    )


def _trial_worker(payload: tuple) -> TrialResult:
    (
        root,
        trial_index,
        trial_seed,
        base,
        increments,
        sampler_cfg,
        train_cfg,
        shots,
        augment,
        prototype_mode,
        state_path,
    ) = payload
    return _run_trial(
        DatasetReader(root),
        trial_index,
        trial_seed,
        base,
        increments,
        sampler_cfg,
        train_cfg,
        shots,
        augment,
        prototype_mode,
        Path(state_path) if state_path else None,
    )


def _run(
    reader: DatasetReader,
    plan: SessionPlan,
    sampler_cfg: SamplerConfig,
    train_cfg: TrainConfig,
    *,
    protocol: str,
    shots: int | None,
    augment: bool,
    prototype_mode: str,
    jobs: int,
    state_dir: Path | None = None,
) -> RunReport:
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    if state_dir is not None:
        state_dir = Path(state_dir)
        state_dir.mkdir(parents=True, exist_ok=True)

    def state_path(t: int) -> Path | None:
        return state_dir / f"state_trial{t}.bin" if state_dir is not None else None

    orders = [_resolve_order(plan, t) for t in range(len(plan.trial_seeds))]
    if jobs == 1 or len(plan.trial_seeds) == 1:
        trials = [
            _run_trial(
                reader,
                t,
                seed,
                plan.base_classes,
                orders[t],
                sampler_cfg,
                train_cfg,
                shots,
                augment,
                prototype_mode,
                state_path(t),
            )
            for t, seed in enumerate(plan.trial_seeds)
        ]
    else:
        # workers re-open the dataset by path; custom reader subclasses are
        # honored only in the sequential path
        payloads = [
            (
                str(reader.root),
                t,
                seed,
                plan.base_classes,
                orders[t],
                sampler_cfg,
                train_cfg,
                shots,
                augment,
                prototype_mode,
                str(state_path(t)) if state_dir is not None else None,
            )
            for t, seed in enumerate(plan.trial_seeds)
        ]
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            trials = list(pool.map(_trial_worker, payloads))
    return RunReport(
        protocol=protocol,
        dim=reader.dim,
        plan=plan,
        sampler=sampler_cfg,
        train=train_cfg,
        prototype_mode=prototype_mode,
        augment=augment,
        trials=tuple(trials),
    )


def run_dfcil(
    reader: DatasetReader,
    plan: SessionPlan,
    sampler_cfg: SamplerConfig | None = None,
    train_cfg: TrainConfig | None = None,
    *,
    prototype_mode: str = "auto",
    jobs: int = 1,
    state_dir: Path | None = None,
) -> RunReport:
    """Run the data-free class-incremental protocol over all plan trials.

    Every session trains on the full training rows of its classes; past
    classes are represented purely by synthetic replay. Per trial the
    incremental classes are re-dealt into a seeded random order unless the
    plan disables shuffling. With ``state_dir`` each trial's final
    prototypes and head are saved as ``state_trial{t}.bin``.
    """
    return _run(
        reader,
        plan,
        sampler_cfg or SamplerConfig(),
        train_cfg or TrainConfig(),
        protocol="dfcil",
        shots=None,
        augment=False,
        prototype_mode=prototype_mode,
        jobs=jobs,
        state_dir=state_dir,
    )


def run_fscil(
    reader: DatasetReader,
    plan: SessionPlan,
    sampler_cfg: SamplerConfig | None = None,
    train_cfg: TrainConfig | None = None,
    *,
    augment: bool = False,
    prototype_mode: str = "auto",
    jobs: int = 1,
    state_dir: Path | None = None,
) -> RunReport:
    """Run the few-shot class-incremental protocol over all plan trials.

    The base session uses full data; each later session sees only
    ``plan.shots`` seeded rows per class (a fresh selection per trial; the
    class order stays fixed). With ``augment`` the shots are expanded into
    a full-size training pool before the head is trained.
    """
    if plan.shots is None:
        raise ValidationError("plan.shots must be set for the few-shot protocol")
    return _run(
        reader,
        plan,
        sampler_cfg or SamplerConfig(),
        train_cfg or TrainConfig(),
        protocol="fscil",
        shots=plan.shots,
        augment=augment,
        prototype_mode=prototype_mode,
        jobs=jobs,
        state_dir=state_dir,
    )


def replay_size_sweep(
    reader: DatasetReader,
    plan: SessionPlan,
    sizes: Sequence[int],
    sampler_cfg: SamplerConfig | None = None,
    train_cfg: TrainConfig | None = None,
    *,
    prototype_mode: str = "auto",
    jobs: int = 1,
) -> dict[int, RunReport]:
    """Re-run the incremental protocol at several replay buffer sizes.

    All other settings, seeds and class orders are held fixed, so the
    reports differ only through the replay budget. The candidate pool is
    raised to the buffer size where needed to keep pools feasible.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise EmptyInput("no sweep sizes given")
    if any(s < 1 for s in sizes):
        raise ValidationError("sweep sizes must be >= 1")
    if len(set(sizes)) != len(sizes):
        raise ValidationError("sweep sizes must be distinct")
    base_cfg = sampler_cfg or SamplerConfig()
    out: dict[int, RunReport] = {}
    for size in sizes:
        cfg = base_cfg.with_(
            replay_per_class=size,
            candidate_pool=max(base_cfg.candidate_pool, size),
        )
        out[size] = run_dfcil(
            reader,
            plan,
            cfg,
            train_cfg,
            prototype_mode=prototype_mode,
            jobs=jobs,
        )
    return out


def sweep_csv_rows(results: dict[int, RunReport]) -> list[list]:
    """Long-form rows across sweep sizes: size, trial, seed, session, g, l, ifm."""
    rows: list[list] = [["size", "trial", "seed", "session", "g", "l", "ifm"]]
    for size, report in results.items():
        for t in report.trials:
            for rec in t.sessions:
                rows.append([size, t.index, t.seed, rec.session_id, rec.g, rec.l, rec.ifm])
    return rows
