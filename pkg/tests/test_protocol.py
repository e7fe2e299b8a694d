import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FAST_SAMPLER, FAST_TRAIN
from protoreplay import (
    DatasetReader,
    EmptyTestSet,
    FeatureSet,
    InsufficientShots,
    LinearClassifier,
    MetricsRecord,
    SessionPlan,
    TooFewSessions,
    ValidationError,
    compute_ifm,
    compute_sad,
    evaluate,
    load_state,
    replay_size_sweep,
    run_dfcil,
    run_fscil,
)
from protoreplay.protocol import _resolve_order, sweep_csv_rows


class TestMetrics:
    def test_ifm_known_values(self):
        assert compute_ifm(60.0, 40.0) == 20.0
        assert compute_ifm(40.0, 60.0) == 20.0
        assert compute_ifm(0.0, 0.0) == 0.0
        assert compute_ifm(100.0, 100.0) == 0.0
        assert compute_ifm(50.0, 0.0) == 100.0

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(0, 100, allow_nan=False),
        st.floats(0, 100, allow_nan=False),
    )
    def test_ifm_properties(self, l, g):
        v = compute_ifm(l, g)
        assert 0.0 <= v <= 100.0
        assert v == compute_ifm(g, l)
        assert compute_ifm(l, l) == 0.0

    def test_ifm_negative(self):
        with pytest.raises(ValidationError):
            compute_ifm(-1.0, 5.0)

    def test_sad(self):
        assert compute_sad([75.5, 70.0, 59.5]) == 16.0
        assert compute_sad([80.0]) == 0.0
        assert compute_sad([50.0, 60.0]) == -10.0

    def test_record_consistency_enforced(self):
        with pytest.raises(ValidationError, match="ifm"):
            MetricsRecord(0, g=50.0, l=60.0, ifm=0.0)
        MetricsRecord(0, g=50.0, l=60.0, ifm=compute_ifm(60.0, 50.0))


class TestEvaluate:
    def perfect_clf(self):
        # identity-like head: class i fires on e_i
        return LinearClassifier((0, 1, 2), np.eye(3) * 10.0, np.zeros(3))

    def basis_rows(self, label, n):
        rows = np.zeros((n, 3))
        rows[:, label] = 1.0
        return rows

    def test_exact_metrics(self):
        clf = self.perfect_clf()
        # class 0: 2 right; class 1: 1 right 1 wrong (flipped row); class 2 novel: all 3 right
        feats = np.vstack(
            [
                self.basis_rows(0, 2),
                self.basis_rows(1, 1),
                self.basis_rows(2, 1),  # labeled 1 but looks like 2
                self.basis_rows(2, 3),
            ]
        )
        labels = np.array([0, 0, 1, 1, 2, 2, 2])
        rec = evaluate(clf, FeatureSet(labels, feats), seen=[0, 1, 2], novel=[2], session_id=4)
        assert rec.session_id == 4
        assert rec.g == pytest.approx(100.0 * 6 / 7)
        assert rec.l == 100.0
        assert rec.counts == {0: (2, 2), 1: (1, 2), 2: (3, 3)}
        assert rec.ifm == pytest.approx(compute_ifm(rec.l, rec.g))

    def test_base_session_convention(self):
        clf = self.perfect_clf()
        fs = FeatureSet(np.array([0, 1]), np.vstack([self.basis_rows(0, 1), self.basis_rows(1, 1)]))
        rec = evaluate(clf, fs, seen=[0, 1], novel=[0, 1])
        assert rec.l == rec.g
        assert rec.ifm == 0.0

    def test_rows_outside_seen_are_excluded_with_warning(self):
        clf = self.perfect_clf()
        fs = FeatureSet(
            np.array([0, 5]), np.vstack([self.basis_rows(0, 1), self.basis_rows(1, 1)])
        )
        with pytest.warns(UserWarning, match="outside the seen set"):
            rec = evaluate(clf, fs, seen=[0, 1], novel=[0, 1])
        assert rec.g == 100.0
        assert rec.counts == {0: (1, 1), 1: (0, 0)}

    def test_empty_after_exclusion(self):
        clf = self.perfect_clf()
        fs = FeatureSet(np.array([5]), self.basis_rows(0, 1))
        with pytest.warns(UserWarning):
            with pytest.raises(EmptyTestSet):
                evaluate(clf, fs, seen=[0], novel=[0])

    def test_novel_must_be_subset(self):
        clf = self.perfect_clf()
        fs = FeatureSet(np.array([0]), self.basis_rows(0, 1))
        with pytest.raises(ValidationError, match="subset"):
            evaluate(clf, fs, seen=[0], novel=[1])


class TestSessionPlan:
    def test_validation(self):
        with pytest.raises(TooFewSessions):
            SessionPlan((), ((1,),), (0,))
        with pytest.raises(ValidationError, match="increment"):
            SessionPlan((0,), ((),), (0,))
        with pytest.raises(ValidationError, match="one session"):
            SessionPlan((0, 1), ((1,),), (0,))
        with pytest.raises(ValidationError, match="trial seed"):
            SessionPlan((0,), (), ())
        with pytest.raises(ValidationError, match="shots"):
            SessionPlan((0,), (), (1,), shots=0)
        with pytest.raises(ValidationError, match="class_order_seed"):
            SessionPlan((0,), ((1,),), (1, 2), class_order_seeds=(5,))

    def test_from_manifest(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[1, 2])
        assert plan.base_classes == (0, 1, 2, 3)
        assert plan.increments == ((4,), (5,))
        assert plan.n_sessions == 3

    def test_resolved_order_is_permutation(self):
        plan = SessionPlan((0, 1), ((2, 3), (4, 5)), (11, 12))
        for t in range(2):
            order = _resolve_order(plan, t)
            assert [len(inc) for inc in order] == [2, 2]
            assert sorted(l for inc in order for l in inc) == [2, 3, 4, 5]
        # order derivation is deterministic per trial seed
        assert _resolve_order(plan, 0) == _resolve_order(plan, 0)

    def test_shuffle_disabled(self):
        plan = SessionPlan((0, 1), ((2, 3), (4, 5)), (11,), shuffle_classes=False)
        assert _resolve_order(plan, 0) == ((2, 3), (4, 5))

    def test_fewshot_keeps_plan_order(self):
        plan = SessionPlan((0, 1), ((2, 3), (4, 5)), (11,), shots=3)
        assert _resolve_order(plan, 0) == ((2, 3), (4, 5))


class RecordingReader(DatasetReader):
    """Counts every train-feature read the protocol performs."""

    def __init__(self, root):
        super().__init__(root)
        self.train_reads: list[int] = []

    def train_features(self, label):
        self.train_reads.append(int(label))
        return super().train_features(label)


@pytest.fixture(scope="module")
def report(tiny_bench):
    reader = DatasetReader(tiny_bench)
    plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[101, 102])
    return run_dfcil(reader, plan, FAST_SAMPLER, FAST_TRAIN)


class TestRunDfcil:
    def test_structure(self, report):
        assert report.protocol == "dfcil"
        assert len(report.trials) == 2
        for trial in report.trials:
            assert [r.session_id for r in trial.sessions] == [0, 1, 2]
            # session 0 convention
            assert trial.sessions[0].ifm == 0.0
            assert trial.sessions[0].l == trial.sessions[0].g
            # counts grow with the seen set and cover full test splits
            assert sum(n for _, n in trial.sessions[0].counts.values()) == 4 * 25
            assert sum(n for _, n in trial.sessions[2].counts.values()) == 6 * 25
            assert set(trial.warnings) == {
                "prototype_filter_empty",
                "unfiltered_replay_fill",
            }

    def test_learns_the_benchmark(self, report):
        # separation 6 is easy; a healthy run keeps global accuracy high
        for trial in report.trials:
            assert trial.final_g > 80.0

    def test_aggregate_recomputable(self, report):
        agg = report.aggregate()
        want = np.mean([t.final_g for t in report.trials])
        assert agg["final_g"]["mean"] == pytest.approx(want)
        doc = report.to_dict()
        # sessions in the document match the records exactly
        for t_doc, t in zip(doc["trials"], report.trials):
            for r_doc, r in zip(t_doc["sessions"], t.sessions):
                assert r_doc["g"] == r.g
                assert r_doc["l"] == r.l
                assert r_doc["ifm"] == r.ifm

    def test_deterministic(self, tiny_bench, report):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[101, 102])
        again = run_dfcil(reader, plan, FAST_SAMPLER, FAST_TRAIN)
        assert again.to_dict() == report.to_dict()

    def test_jobs_equivalent(self, tiny_bench, report):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[101, 102])
        parallel = run_dfcil(reader, plan, FAST_SAMPLER, FAST_TRAIN, jobs=2)
        assert parallel.to_dict() == report.to_dict()

    def test_json_round_trip(self, report):
        doc = report.to_dict()
        assert json.loads(json.dumps(doc)) == doc

    def test_each_class_read_once_in_its_session(self, tiny_bench):
        reader = RecordingReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[7])
        run_dfcil(reader, plan, FAST_SAMPLER, FAST_TRAIN)
        reads = reader.train_reads
        assert sorted(reads) == sorted(reader.labels())  # once per class, ever
        sessions = [reader.session_of(l) for l in reads]
        assert sessions == sorted(sessions)  # and only during its own session

    def test_state_saving(self, tiny_bench, tmp_path):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[7])
        run_dfcil(
            reader, plan, FAST_SAMPLER, FAST_TRAIN, state_dir=tmp_path / "states"
        )
        store, clf = load_state(tmp_path / "states" / "state_trial0.bin")
        assert store.labels() == reader.labels()
        assert clf is not None
        assert sorted(clf.labels) == reader.labels()


class TestRunFscil:
    def test_insufficient_shots(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[1], shots=1000)
        with pytest.raises(InsufficientShots):
            run_fscil(reader, plan, FAST_SAMPLER, FAST_TRAIN)

    def test_needs_shots(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[1])
        with pytest.raises(ValidationError, match="shots"):
            run_fscil(reader, plan, FAST_SAMPLER, FAST_TRAIN)

    def test_full_shot_run_equals_dfcil(self, tiny_bench):
        # with shots = the entire class and shuffling off, the few-shot
        # protocol walks exactly the same data as the incremental one
        reader = DatasetReader(tiny_bench)
        full = reader.manifest.entry(0).train_count
        plan_fs = SessionPlan.from_manifest(reader.manifest, trial_seeds=[9], shots=full)
        plan_il = SessionPlan.from_manifest(
            reader.manifest, trial_seeds=[9], shuffle_classes=False
        )
        a = run_fscil(reader, plan_fs, FAST_SAMPLER, FAST_TRAIN)
        b = run_dfcil(reader, plan_il, FAST_SAMPLER, FAST_TRAIN)
        for ta, tb in zip(a.trials, b.trials):
            assert ta.sessions == tb.sessions

    def test_shot_selection_varies_by_trial(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[1, 2], shots=5)
        report = run_fscil(reader, plan, FAST_SAMPLER, FAST_TRAIN)
        # same fixed class order but different shot draws: sessions differ
        assert report.trials[0].class_order == report.trials[1].class_order
        assert report.trials[0].sessions != report.trials[1].sessions

    def test_augment_runs_and_reports_same_shape(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[3], shots=5)
        plain = run_fscil(reader, plan, FAST_SAMPLER, FAST_TRAIN, augment=False)
        augmented = run_fscil(reader, plan, FAST_SAMPLER, FAST_TRAIN, augment=True)
        assert augmented.augment and not plain.augment
        da, dp = augmented.to_dict(), plain.to_dict()
        assert set(da) == set(dp)
        assert len(da["trials"][0]["sessions"]) == len(dp["trials"][0]["sessions"])


class TestSweep:
    def test_singleton_matches_plain_run(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[5])
        size = FAST_SAMPLER.replay_per_class
        swept = replay_size_sweep(reader, plan, [size], FAST_SAMPLER, FAST_TRAIN)
        plain = run_dfcil(reader, plan, FAST_SAMPLER, FAST_TRAIN)
        assert swept[size].to_dict() == plain.to_dict()

    def test_csv_rows(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[5])
        results = replay_size_sweep(reader, plan, [5, 10], FAST_SAMPLER, FAST_TRAIN)
        rows = sweep_csv_rows(results)
        assert rows[0] == ["size", "trial", "seed", "session", "g", "l", "ifm"]
        assert len(rows) == 1 + 2 * 1 * 3  # sizes x trials x sessions

    def test_validation(self, tiny_bench):
        reader = DatasetReader(tiny_bench)
        plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=[5])
        with pytest.raises(ValidationError, match="distinct"):
            replay_size_sweep(reader, plan, [5, 5], FAST_SAMPLER, FAST_TRAIN)
