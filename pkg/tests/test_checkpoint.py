import struct
import warnings

import numpy as np
import pytest

from protoreplay import (
    ClassPrototype,
    LinearClassifier,
    ParseError,
    PrototypeStore,
    ValidationError,
    fit_prototype,
    load_state,
    save_state,
    svd_reduce,
)

from helpers import random_spd


def f32_clean(arr):
    """Round to float32 so a container round trip is lossless."""
    return np.asarray(arr, dtype=np.float32).astype(np.float64)


def full_store(dim=5, n_classes=3, seed=2, clean=True):
    rng = np.random.default_rng(seed)
    store = PrototypeStore(dim)
    for label in range(n_classes):
        mean = rng.standard_normal(dim)
        cov = random_spd(rng, dim)
        if clean:
            mean = f32_clean(mean)
            cov = f32_clean(cov)
            cov = (cov + cov.T) / 2.0
        store.add(ClassPrototype(label=label, mean=mean, cov=cov, sample_count=7))
    return store


def reduced_store(dim=6, rank=2, seed=5):
    rng = np.random.default_rng(seed)
    store = PrototypeStore(dim)
    basis_full = np.linalg.qr(rng.standard_normal((dim, dim)))[0][:, :rank]
    coords = rng.standard_normal((12, rank)) * np.array([3.0, 0.5])
    rows = rng.standard_normal(dim) + coords @ basis_full.T
    store.add(svd_reduce(4, rows))
    return store


def head(dim=5, labels=(0, 1, 2), seed=3, clean=True):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((len(labels), dim))
    b = rng.standard_normal(len(labels))
    if clean:
        w, b = f32_clean(w), f32_clean(b)
    return LinearClassifier(tuple(labels), w, b)


class TestRoundTrip:
    def test_full_prototypes(self, tmp_path):
        store = full_store(clean=False)
        save_state(tmp_path / "s.bin", store)
        back, clf = load_state(tmp_path / "s.bin")
        assert clf is None
        assert back.dim == store.dim
        assert back.labels() == store.labels()
        for label in store.labels():
            a, b = store.get(label), back.get(label)
            assert b.sample_count == a.sample_count
            assert not b.reduced
            np.testing.assert_allclose(b.mean, a.mean, rtol=2e-7, atol=1e-7)
            np.testing.assert_allclose(b.cov, a.cov, rtol=2e-7, atol=1e-7)

    def test_f32_clean_store_is_bitwise_stable(self, tmp_path):
        store = full_store(clean=True)
        clf = head(clean=True)
        p1 = tmp_path / "a.bin"
        p2 = tmp_path / "b.bin"
        save_state(p1, store, clf)
        back_store, back_clf = load_state(p1)
        save_state(p2, back_store, back_clf)
        assert p1.read_bytes() == p2.read_bytes()
        for label in store.labels():
            np.testing.assert_array_equal(back_store.get(label).mean, store.get(label).mean)
            np.testing.assert_array_equal(back_store.get(label).cov, store.get(label).cov)
        np.testing.assert_array_equal(back_clf.weights, clf.weights)
        np.testing.assert_array_equal(back_clf.bias, clf.bias)
        assert back_clf.labels == clf.labels

    def test_reduced_prototype(self, tmp_path):
        store = reduced_store()
        save_state(tmp_path / "s.bin", store)
        back, _ = load_state(tmp_path / "s.bin")
        a, b = store.get(4), back.get(4)
        assert b.reduced and b.rank == a.rank
        np.testing.assert_allclose(b.basis, a.basis, atol=1e-7)
        np.testing.assert_allclose(b.reduced_mean, a.reduced_mean, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(b.reduced_cov, a.reduced_cov, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(b.cov, a.cov, atol=1e-5)

    def test_classifier_predictions_survive(self, tmp_path):
        store = full_store()
        clf = head()
        save_state(tmp_path / "s.bin", store, clf)
        _, back = load_state(tmp_path / "s.bin")
        z = np.random.default_rng(0).standard_normal((40, store.dim))
        np.testing.assert_array_equal(back.predict(z), clf.predict(z))

    def test_mixed_record_types(self, tmp_path):
        store = reduced_store(dim=6)
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((10, 6)) * 2.0 + 1.0
        store.add(fit_prototype(7, rows))
        save_state(tmp_path / "s.bin", store)
        back, _ = load_state(tmp_path / "s.bin")
        assert back.labels() == [4, 7]
        assert back.get(4).reduced and not back.get(7).reduced

    def test_empty_store(self, tmp_path):
        save_state(tmp_path / "s.bin", PrototypeStore(3))
        back, clf = load_state(tmp_path / "s.bin")
        assert back.dim == 3 and len(back) == 0 and clf is None

    def test_creates_parent_dirs(self, tmp_path):
        p = save_state(tmp_path / "deep" / "er" / "s.bin", full_store())
        assert p.exists()

    def test_dim_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="dim"):
            save_state(tmp_path / "s.bin", full_store(dim=5), head(dim=4))


class TestRepair:
    def test_rounding_degraded_covariance_is_repaired(self, tmp_path):
        # one dominant eigenvalue and seven exact zeros: float32 rounding
        # pushes an eigenvalue below the PSD tolerance, load must recover
        rng = np.random.default_rng(1)
        d, r = 12, 8
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        basis = q[:, :r]
        u, _ = np.linalg.qr(rng.standard_normal((r, r)))
        lams = np.zeros(r)
        lams[0] = 100.0
        rcov = (u * lams) @ u.T
        rcov = (rcov + rcov.T) / 2.0
        proto = ClassPrototype(
            label=0,
            mean=rng.standard_normal(d),
            cov=basis @ rcov @ basis.T,
            sample_count=9,
            basis=basis,
            reduced_mean=rng.standard_normal(r),
            reduced_cov=rcov,
        )
        store = PrototypeStore(d)
        store.add(proto)
        save_state(tmp_path / "s.bin", store)
        with pytest.warns(UserWarning, match="repairing"):
            back, _ = load_state(tmp_path / "s.bin")
        lam = np.linalg.eigvalsh(back.get(0).reduced_cov)
        assert lam.min() >= -1e-8 * lam.sum()
        np.testing.assert_allclose(back.get(0).reduced_cov, rcov, atol=1e-4)

    def test_healthy_file_loads_silently(self, tmp_path):
        save_state(tmp_path / "s.bin", reduced_store(), head(dim=6, labels=(4,)))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            load_state(tmp_path / "s.bin")


class TestMalformed:
    @pytest.fixture()
    def good(self, tmp_path):
        p = tmp_path / "s.bin"
        save_state(p, full_store(dim=4, n_classes=2), head(dim=4, labels=(0, 1)))
        return p

    def test_bad_magic(self, good):
        raw = bytearray(good.read_bytes())
        raw[:4] = b"NOPE"
        good.write_bytes(bytes(raw))
        with pytest.raises(ParseError, match="not a prototype container"):
            load_state(good)

    def test_future_version(self, good):
        raw = bytearray(good.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        good.write_bytes(bytes(raw))
        with pytest.raises(ValidationError, match="version"):
            load_state(good)

    @pytest.mark.parametrize("keep", [0, 3, 10, 17, 60])
    def test_truncation(self, good, keep):
        good.write_bytes(good.read_bytes()[:keep])
        with pytest.raises(ParseError, match="truncated"):
            load_state(good)

    def test_trailing_bytes(self, good):
        good.write_bytes(good.read_bytes() + b"\x00")
        with pytest.raises(ParseError, match="trailing"):
            load_state(good)

    def test_unknown_record_type(self, good):
        raw = bytearray(good.read_bytes())
        raw[16] = 9  # first record's type byte sits right after the header
        good.write_bytes(bytes(raw))
        with pytest.raises(ParseError, match="unknown record type"):
            load_state(good)

    def test_duplicate_classifier(self, tmp_path):
        p = tmp_path / "s.bin"
        save_state(p, PrototypeStore(4), head(dim=4, labels=(0, 1)))
        raw = bytearray(p.read_bytes())
        record = bytes(raw[16:])
        raw[12:16] = struct.pack("<I", 2)
        p.write_bytes(bytes(raw) + record)
        with pytest.raises(ParseError, match="more than one classifier"):
            load_state(p)

    def test_not_a_file(self, tmp_path):
        with pytest.raises(OSError):
            load_state(tmp_path / "missing.bin")
