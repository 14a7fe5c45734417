import struct

import numpy as np
import pytest

from expose.data import (ANOMALY, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, KDD_COLUMNS, NORMAL, Dataset,
                         KddPreprocessor, SamplerState, load_csv, load_idx, make_anomaly_split,
                         next_sample, preprocess_kdd, read_kdd_records, save_csv, write_idx)
from expose.errors import DataFormatError, InputError, SamplerExhaustedError


class TestDataset:
    def test_rejects_nonfinite(self):
        with pytest.raises(InputError, match="row 1"):
            Dataset(np.array([[1.0, 2.0], [np.nan, 0.0]]))

    def test_label_length(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((3, 2)), labels=[1, 2])

    def test_immutable(self):
        d = Dataset(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            d.features[0, 0] = 1.0


class TestCsv:
    def test_basic(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2,3\n4,5,6\n")
        d = load_csv(p)
        np.testing.assert_array_equal(d.features, [[1, 2, 3], [4, 5, 6]])
        assert d.labels is None

    def test_labels_and_header(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x,y,label\n1,2,0\n3,4,1\n")
        d = load_csv(p, has_labels=True, header=True)
        assert d.features.shape == (2, 2)
        np.testing.assert_array_equal(d.labels, [0, 1])

    def test_empty(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("")
        with pytest.raises(DataFormatError):
            load_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_csv(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(DataFormatError, match="line 2, column 2"):
            load_csv(p)

    @pytest.mark.parametrize("bad", ["nan", "inf"])
    def test_nonfinite(self, tmp_path, bad):
        p = tmp_path / "a.csv"
        p.write_text(f"1,2\n3,{bad}\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_csv(p)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        d = Dataset(rng.normal(size=(1000, 4)) * 10.0 ** rng.integers(-8, 8, size=(1000, 4)),
                    labels=rng.integers(0, 10, 1000))
        p = tmp_path / "rt.csv"
        save_csv(d, p)
        back = load_csv(p, has_labels=True)
        assert back.features.tobytes() == d.features.tobytes()
        np.testing.assert_array_equal(back.labels, d.labels)


class TestIdx:
    def test_fixture(self, tmp_path):
        imgs = np.array([[[0, 255], [51, 102]], [[1, 2], [3, 4]]], dtype=np.uint8)
        write_idx(tmp_path / "img", imgs, IDX_IMAGES_MAGIC)
        write_idx(tmp_path / "lab", np.array([7, 1], dtype=np.uint8), IDX_LABELS_MAGIC)
        d = load_idx(tmp_path / "img", tmp_path / "lab")
        assert d.features.shape == (2, 4)
        np.testing.assert_array_equal(d.features[0], [0.0, 1.0, 0.2, 0.4])
        np.testing.assert_array_equal(d.features[1], np.array([1, 2, 3, 4]) / 255.0)
        np.testing.assert_array_equal(d.labels, [7, 1])
        assert "1/255" in d.provenance

    def test_byte_layout(self, tmp_path):
        # hand-assembled bytes, independent of write_idx
        raw = struct.pack(">IIII", 0x803, 1, 1, 3) + bytes([10, 20, 30])
        (tmp_path / "img").write_bytes(raw)
        d = load_idx(tmp_path / "img")
        np.testing.assert_array_equal(d.features, [[10 / 255, 20 / 255, 30 / 255]])

    def test_gzip(self, tmp_path):
        import gzip
        raw = struct.pack(">IIII", 0x803, 1, 1, 2) + bytes([0, 255])
        with gzip.open(tmp_path / "img.gz", "wb") as fh:
            fh.write(raw)
        np.testing.assert_array_equal(load_idx(tmp_path / "img.gz").features, [[0.0, 1.0]])

    def test_wrong_magic(self, tmp_path):
        write_idx(tmp_path / "img", np.zeros((1, 2, 2)), IDX_LABELS_MAGIC + 0x100)
        with pytest.raises(DataFormatError, match="magic"):
            load_idx(tmp_path / "img")

    def test_label_count_mismatch(self, tmp_path):
        write_idx(tmp_path / "img", np.zeros((2, 2, 2)), IDX_IMAGES_MAGIC)
        write_idx(tmp_path / "lab", np.zeros(3), IDX_LABELS_MAGIC)
        with pytest.raises(DataFormatError) as info:
            load_idx(tmp_path / "img", tmp_path / "lab")
        assert "2" in str(info.value) and "3" in str(info.value)

    def test_truncated_payload(self, tmp_path):
        raw = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(5)
        (tmp_path / "img").write_bytes(raw)
        with pytest.raises(DataFormatError):
            load_idx(tmp_path / "img")


def kdd_record(duration, proto, service, flag, src_bytes, label="normal."):
    row = ["0"] * len(KDD_COLUMNS)
    row[0], row[1], row[2], row[3], row[4] = str(duration), proto, service, flag, str(src_bytes)
    row[6], row[11], row[20], row[21] = "0", "1", "0", "0"
    return row + [label]


class TestKdd:
    @pytest.fixture
    def records(self):
        rows = [kdd_record(0, "tcp", "http", "SF", 100),
                kdd_record(5, "udp", "private", "SF", 300, "smurf."),
                kdd_record(10, "tcp", "http", "REJ", 200)]
        return [r[:-1] for r in rows], [r[-1] for r in rows]

    def test_encoding(self, records):
        recs, labels = records
        d, pre = preprocess_kdd(recs, raw_labels=labels)
        # 34 continuous + protocol{tcp,udp} + service{http,private} + flag{REJ,SF} + 4 binary
        # symbolic columns each seen with one value
        assert d.d == 34 + 2 + 2 + 2 + 1 + 1 + 1 + 1
        assert pre.output_dim == d.d
        np.testing.assert_array_equal(d.features[:, 0], [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(d.features[:, 1], [0.0, 1.0, 0.5])  # src_bytes
        # constant continuous column maps to 0
        np.testing.assert_array_equal(d.features[:, 2], [0.0, 0.0, 0.0])
        proto = d.features[:, 34:36]
        np.testing.assert_array_equal(proto, [[1, 0], [0, 1], [1, 0]])
        np.testing.assert_array_equal(d.labels, [NORMAL, ANOMALY, NORMAL])
        assert d.features.min() >= 0 and d.features.max() <= 1

    def test_reuse_on_test_and_unknown_category(self, records, tmp_path):
        recs, _ = records
        pre = KddPreprocessor().fit(recs)
        pre.save(tmp_path / "p.json")
        pre2 = KddPreprocessor.load(tmp_path / "p.json")
        np.testing.assert_array_equal(pre2.transform(recs), pre.transform(recs))
        bad = kdd_record(1, "icmp", "http", "SF", 1)[:-1]
        with pytest.raises(InputError, match="icmp"):
            pre2.transform([bad])

    def test_short_record(self):
        with pytest.raises(DataFormatError):
            KddPreprocessor().fit([["0", "tcp"]])

    def test_read_file(self, records, tmp_path):
        recs, labels = records
        p = tmp_path / "kdd.data"
        p.write_text("\n".join(",".join(r + [lab]) for r, lab in zip(recs, labels)) + "\n")
        r2, l2 = read_kdd_records(p)
        assert r2 == recs and l2 == labels
        (tmp_path / "bad").write_text("1,2,3\n")
        with pytest.raises(DataFormatError, match="line 1"):
            read_kdd_records(tmp_path / "bad")


class TestSplit:
    def test_small_enumeration(self):
        d = Dataset(np.arange(8.0).reshape(4, 2), labels=[1, 1, 2, 3])
        ok = 0
        for seed in range(20):
            try:
                train, test = make_anomaly_split(d, 1, 2, seed)
            except InputError:
                # both normal rows drawn into the test set
                continue
            ok += 1
            assert train.labels is None
            assert set(map(tuple, train.features)) <= {(0.0, 1.0), (2.0, 3.0)}
            assert test.n == 2
            train_rows = set(map(tuple, train.features))
            assert not train_rows & set(map(tuple, test.features))
            assert train.n + int(np.sum(test.labels == NORMAL)) == 2
        assert ok > 10

    def test_both_classes_and_determinism(self):
        rng = np.random.default_rng(0)
        d = Dataset(rng.normal(size=(200, 3)), labels=rng.integers(0, 10, 200))
        train, test = make_anomaly_split(d, 1, 50, seed=4)
        assert set(test.labels) == {NORMAL, ANOMALY}
        train2, test2 = make_anomaly_split(d, 1, 50, seed=4)
        assert train.features.tobytes() == train2.features.tobytes()
        assert test.features.tobytes() == test2.features.tobytes()

    def test_errors(self):
        d = Dataset(np.zeros((4, 1)), labels=[1, 1, 2, 3])
        with pytest.raises(InputError):
            make_anomaly_split(d, 9, 2, 0)
        with pytest.raises(InputError):
            make_anomaly_split(d, 1, 5, 0)
        with pytest.raises(InputError):
            make_anomaly_split(Dataset(np.zeros((4, 1))), 1, 2, 0)


class TestSampler:
    def test_single_row(self):
        s = SamplerState.create(1, "with-replacement", 0)
        assert {next_sample(s)[0] for _ in range(20)} == {0}

    def test_without_replacement_permutation(self):
        s = SamplerState.create(5, "without-replacement", 3)
        drawn = [next_sample(s)[0] for _ in range(5)]
        assert sorted(drawn) == [0, 1, 2, 3, 4]
        with pytest.raises(SamplerExhaustedError, match="with-replacement"):
            next_sample(s)

    def test_uniformity(self):
        s = SamplerState.create(10, "with-replacement", 11)
        counts = np.bincount([s.draw() for _ in range(100_000)], minlength=10)
        assert np.all(np.abs(counts - 10_000) <= 500)

    def test_size_mismatch(self):
        s = SamplerState.create(3, "with-replacement", 0)
        with pytest.raises(InputError):
            next_sample(s, Dataset(np.zeros((4, 1))))

    def test_bad_mode(self):
        with pytest.raises(InputError):
            SamplerState.create(3, "bootstrap", 0)
