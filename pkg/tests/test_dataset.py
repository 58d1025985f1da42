"""Dataset generation, stratified splitting, binary round-trip."""

import numpy as np
import pytest

from tapscount.dataset import (
    Dataset,
    GenerationConfig,
    build_dataset,
    dataset_tx,
    generation_config,
    load_dataset,
    rebuild_channel,
    save_dataset,
    split_dataset,
)
from tapscount.errors import FileFormatError
from tapscount.signals import convolve, featurize

GEN = GenerationConfig(n_tx=32, cir_length=16, max_delay=16.0)


class TestBuildDataset:
    def test_single_sample(self):
        ds = build_dataset(1, [1], GEN, master_seed=0)
        assert ds.n_samples == 1
        assert ds.labels[0] == 0
        assert ds.class_map == {0: 1}
        assert ds.feature_dim == 2 * (32 + 16 - 1)

    def test_balanced_counts(self):
        ds = build_dataset(100, list(range(1, 11)), GEN, master_seed=1)
        assert ds.n_samples == 1000
        for j in range(10):
            assert np.count_nonzero(ds.labels == j) == 100

    def test_per_class_counts(self):
        ds = build_dataset([5, 2, 9], [1, 3, 7], GEN, master_seed=1)
        assert [np.count_nonzero(ds.labels == j) for j in range(3)] == [5, 2, 9]

    def test_bit_identical_regeneration(self):
        a = build_dataset(20, [1, 2, 3], GEN, master_seed=42)
        b = build_dataset(20, [1, 2, 3], GEN, master_seed=42)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_features_match_pipeline(self):
        ds = build_dataset(3, [2, 4], GEN, master_seed=7)
        tx = dataset_tx(GEN, 7)
        for i in range(ds.n_samples):
            h = rebuild_channel(ds, i)
            expected = featurize(convolve(tx, h)).astype(np.float32)
            np.testing.assert_array_equal(ds.features[i], expected)

    def test_label_fidelity_end_to_end(self):
        ds = build_dataset(10, [1, 5, 9], GEN, master_seed=3)
        for i in range(ds.n_samples):
            h = rebuild_channel(ds, i)
            assert np.count_nonzero(h) == ds.class_map[int(ds.labels[i])]

    def test_include_tx_feature_dim(self):
        gen = GenerationConfig(n_tx=32, cir_length=16, max_delay=16.0, include_tx=True)
        ds = build_dataset(2, [1], gen, master_seed=0)
        assert ds.feature_dim == 2 * 32 + 2 * 47

    def test_rejects_duplicate_classes(self):
        with pytest.raises(ValueError):
            build_dataset(5, [1, 1], GEN, master_seed=0)


class TestSplitDataset:
    def test_proportions(self):
        ds = build_dataset(100, list(range(1, 11)), GEN, master_seed=4)
        split = split_dataset(ds, seed=0)
        assert len(split.train) == 700
        assert len(split.validation) == 150
        assert len(split.test) == 150

    def test_disjoint_and_complete(self):
        ds = build_dataset(37, [1, 2, 3], GEN, master_seed=5)
        split = split_dataset(ds, seed=1)
        merged = np.concatenate([split.train, split.validation, split.test])
        assert len(merged) == ds.n_samples
        assert len(set(merged.tolist())) == ds.n_samples

    def test_stratified_within_one_sample(self):
        ds = build_dataset(37, [1, 2, 3], GEN, master_seed=5)
        split = split_dataset(ds, seed=1)
        for j in range(3):
            n_train = np.count_nonzero(ds.labels[split.train] == j)
            assert abs(n_train - 0.7 * 37) <= 1

    def test_largest_remainder_ten_samples(self):
        ds = build_dataset(10, [4], GEN, master_seed=6)
        split = split_dataset(ds, seed=2)
        assert len(split.train) == 7
        assert len(split.validation) == 2
        assert len(split.test) == 1

    def test_deterministic(self):
        ds = build_dataset(20, [1, 2], GEN, master_seed=7)
        a = split_dataset(ds, seed=3)
        b = split_dataset(ds, seed=3)
        np.testing.assert_array_equal(a.train, b.train)
        np.testing.assert_array_equal(a.test, b.test)

    def test_class_too_small(self):
        ds = build_dataset([5, 2], [1, 2], GEN, master_seed=8)
        with pytest.raises(ValueError):
            split_dataset(ds, seed=0)

    def test_bad_ratios(self):
        ds = build_dataset(5, [1], GEN, master_seed=9)
        with pytest.raises(ValueError):
            split_dataset(ds, ratios=(0.5, 0.2, 0.2), seed=0)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        ds = build_dataset(8, [1, 3], GEN, master_seed=10)
        path = tmp_path / "data.taps"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        assert loaded.class_map == ds.class_map
        assert loaded.metadata == ds.metadata

    def test_save_is_deterministic(self, tmp_path):
        ds = build_dataset(8, [1, 3], GEN, master_seed=10)
        p1 = tmp_path / "a.taps"
        p2 = tmp_path / "b.taps"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "a.taps.meta").read_text() == (tmp_path / "b.taps.meta").read_text()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "data.taps"
        path.write_bytes(b"WRNG" + b"\x00" * 32)
        with pytest.raises(FileFormatError):
            load_dataset(path)

    def test_bad_version(self, tmp_path):
        ds = build_dataset(2, [1], GEN, master_seed=11)
        path = tmp_path / "data.taps"
        save_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (9).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FileFormatError):
            load_dataset(path)

    def test_truncated(self, tmp_path):
        ds = build_dataset(2, [1], GEN, master_seed=12)
        path = tmp_path / "data.taps"
        save_dataset(ds, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FileFormatError):
            load_dataset(path)

    def test_empty_dataset(self, tmp_path):
        empty = Dataset(
            features=np.zeros((0, 6), dtype=np.float32),
            labels=np.zeros(0, dtype=np.int64),
            class_map={0: 1},
            metadata={"note": "empty"},
        )
        path = tmp_path / "empty.taps"
        save_dataset(empty, path)
        loaded = load_dataset(path)
        assert loaded.n_samples == 0
        assert loaded.feature_dim == 6
        assert loaded.class_map == {0: 1}

    def test_metadata_rebuilds_generation_config(self, tmp_path):
        ds = build_dataset(2, [1], GEN, master_seed=13)
        path = tmp_path / "data.taps"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert generation_config(loaded) == GEN
