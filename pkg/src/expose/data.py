"""Dataset container, file ingestion, anomaly splits and the training sampler."""

from __future__ import annotations

import csv
import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InputError, SamplerExhaustedError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

WITH_REPLACEMENT = "with-replacement"
WITHOUT_REPLACEMENT = "without-replacement"
SAMPLING_MODES = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)

# Binary labels produced by make_anomaly_split and expected by scoring.
NORMAL = 1
ANOMALY = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    provenance: str = ""

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InputError(f"dataset must be a non-empty n x d matrix, got shape {x.shape}")
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            raise InputError(f"non-finite value in row {int(np.argmax(bad))}")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.array(self.labels).astype(np.int64).ravel()
            if y.shape[0] != x.shape[0]:
                raise InputError(f"labels have length {y.shape[0]}, expected {x.shape[0]}")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def subset(self, index, name=None, labels=...):
        index = np.asarray(index)
        if labels is ...:
            labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], labels, name or self.name, self.provenance)


# ---------------------------------------------------------------- CSV


def load_csv(path, has_labels=False, header=False, name=None) -> Dataset:
    """Read a numeric CSV; with ``has_labels`` the last column holds integer labels."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        width = None
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"ragged row: expected {width} columns, found {len(row)}", f"line {lineno}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"non-numeric cell {cell!r}", f"line {lineno}, column {col}") from None
                if not np.isfinite(v):
                    raise DataFormatError(f"non-finite value {cell!r}", f"line {lineno}, column {col}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"no data rows in {path}")
    arr = np.array(rows, dtype=np.float64)
    labels = None
    if has_labels:
        if arr.shape[1] < 2:
            raise DataFormatError("labelled CSV needs at least one feature column and a label column")
        labels = arr[:, -1]
        if not np.all(labels == np.round(labels)):
            raise DataFormatError("label column must hold integers")
        labels = labels.astype(np.int64)
        arr = arr[:, :-1]
    return Dataset(arr, labels, name or path.stem, f"csv:{path}")


def save_csv(data: Dataset, path):
    """Write features (and labels as the last column) with round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, row in enumerate(data.features):
            cells = [repr(float(v)) for v in row]
            if data.labels is not None:
                cells.append(str(int(data.labels[i])))
            writer.writerow(cells)


# ---------------------------------------------------------------- IDX


def _open_maybe_gzip(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic):
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: file too short for an IDX header")
    magic, = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    count = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) != count:
        raise DataFormatError(
            f"{path}: header declares {count} bytes of data, file holds {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None, name=None) -> Dataset:
    """Parse MNIST-style IDX files; pixels are scaled to [0, 1] by 1/255."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    n = images.shape[0]
    features = images.reshape(n, -1).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
        if labels.shape[0] != n:
            raise DataFormatError(
                f"image file holds {n} items but label file holds {labels.shape[0]}")
        labels = labels.astype(np.int64)
    return Dataset(features, labels, name or Path(images_path).name,
                   f"idx:{images_path}; pixels scaled by 1/255")


def write_idx(path, array, magic):
    """Write a uint8 array in IDX format (used for fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


# ---------------------------------------------------------------- KDD-CUP 99

KDD_COLUMNS = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root", "num_file_creations",
    "num_shells", "num_access_files", "num_outbound_cmds", "is_host_login",
    "is_guest_login", "count", "srv_count", "serror_rate", "srv_serror_rate",
    "rerror_rate", "srv_rerror_rate", "same_srv_rate", "diff_srv_rate",
    "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate", "dst_host_srv_serror_rate",
    "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
KDD_SYMBOLIC = (1, 2, 3, 6, 11, 20, 21)
KDD_CONTINUOUS = tuple(i for i in range(len(KDD_COLUMNS)) if i not in KDD_SYMBOLIC)
KDD_NORMAL_LABEL = "normal."


@dataclass
class KddPreprocessor:
    """Min-max scaling for the 34 continuous columns, one-hot for the 7 symbolic ones.

    Fit on one set of records, then ``transform`` any other set with the same
    parameters. Unknown symbolic values at transform time raise.
    """

    mins: list = field(default_factory=list)
    maxs: list = field(default_factory=list)
    vocabularies: list = field(default_factory=list)

    @property
    def fitted(self):
        return bool(self.vocabularies)

    @property
    def output_dim(self):
        return len(KDD_CONTINUOUS) + sum(len(v) for v in self.vocabularies)

    def fit(self, records):
        records = _check_kdd_records(records)
        cont = np.array([[float(r[i]) for i in KDD_CONTINUOUS] for r in records])
        self.mins = cont.min(axis=0).tolist()
        self.maxs = cont.max(axis=0).tolist()
        self.vocabularies = [sorted({r[i] for r in records}) for i in KDD_SYMBOLIC]
        return self

    def transform(self, records) -> np.ndarray:
        if not self.fitted:
            raise InputError("KddPreprocessor must be fit before transform")
        records = _check_kdd_records(records)
        cont = np.array([[float(r[i]) for i in KDD_CONTINUOUS] for r in records])
        lo = np.array(self.mins)
        span = np.array(self.maxs) - lo
        safe = np.where(span > 0, span, 1.0)
        # constant columns map to 0
        scaled = np.where(span > 0, (cont - lo) / safe, 0.0)
        blocks = [scaled]
        for col, vocab in zip(KDD_SYMBOLIC, self.vocabularies):
            lookup = {v: j for j, v in enumerate(vocab)}
            onehot = np.zeros((len(records), len(vocab)))
            for row, r in enumerate(records):
                j = lookup.get(r[col])
                if j is None:
                    raise InputError(
                        f"unknown value {r[col]!r} in symbolic column {KDD_COLUMNS[col]!r} "
                        f"(row {row}); known values: {vocab}")
                onehot[row, j] = 1.0
            blocks.append(onehot)
        return np.hstack(blocks)

    def to_dict(self):
        return {"mins": self.mins, "maxs": self.maxs, "vocabularies": self.vocabularies,
                "symbolic_columns": list(KDD_SYMBOLIC)}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["mins"]), list(d["maxs"]), [list(v) for v in d["vocabularies"]])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_kdd_records(records):
    records = [list(r) for r in records]
    if not records:
        raise InputError("no KDD records")
    for i, r in enumerate(records):
        if len(r) < len(KDD_COLUMNS):
            raise DataFormatError(
                f"KDD record has {len(r)} fields, expected {len(KDD_COLUMNS)} (+ label)",
                f"record {i}")
    return records


def read_kdd_records(path):
    """Return (records, raw_labels) from the original comma-separated KDD text."""
    opener = gzip.open if str(path).endswith(".gz") else open
    records, labels = [], []
    with opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) not in (len(KDD_COLUMNS), len(KDD_COLUMNS) + 1):
                raise DataFormatError(
                    f"expected {len(KDD_COLUMNS) + 1} fields, found {len(parts)}", f"line {lineno}")
            records.append(parts[:len(KDD_COLUMNS)])
            labels.append(parts[len(KDD_COLUMNS)] if len(parts) > len(KDD_COLUMNS) else None)
    if not records:
        raise DataFormatError(f"no records in {path}")
    return records, labels


def preprocess_kdd(raw_records, preprocessor=None, raw_labels=None, name="kddcup99"):
    """Encode KDD records into a Dataset.

    Without a ``preprocessor`` one is fit on ``raw_records``. Labels, when
    given, become NORMAL for ``"normal."`` and ANOMALY otherwise. Returns
    ``(dataset, preprocessor)``.
    """
    if preprocessor is None:
        preprocessor = KddPreprocessor().fit(raw_records)
    x = preprocessor.transform(raw_records)
    labels = None
    if raw_labels is not None and all(lab is not None for lab in raw_labels):
        labels = np.array([NORMAL if lab.strip() == KDD_NORMAL_LABEL else ANOMALY
                           for lab in raw_labels])
    return Dataset(x, labels, name, "kdd: 34 continuous min-max, 7 symbolic one-hot"), preprocessor


# ---------------------------------------------------------------- splits


def make_anomaly_split(data: Dataset, normal_label: int, test_size: int, seed):
    """Hold out ``test_size`` random rows as a labelled test set.

    The training set is every remaining row whose label equals
    ``normal_label``; it carries no labels. Test labels are NORMAL/ANOMALY.
    """
    if data.labels is None:
        raise InputError("anomaly split needs a labelled dataset")
    is_normal = data.labels == normal_label
    if not is_normal.any():
        raise InputError(f"normal label {normal_label} does not occur in the dataset")
    test_size = int(test_size)
    if test_size < 1 or test_size > data.n:
        raise InputError(f"test_size {test_size} outside [1, {data.n}]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    test_idx = np.sort(order[:test_size])
    rest = np.sort(order[test_size:])
    train_idx = rest[is_normal[rest]]
    if train_idx.size == 0:
        raise InputError("no normal rows left for training after drawing the test set")
    train = data.subset(train_idx, name=f"{data.name}-train", labels=None)
    test_labels = np.where(is_normal[test_idx], NORMAL, ANOMALY)
    test = data.subset(test_idx, name=f"{data.name}-test", labels=test_labels)
    return train, test


def synthetic_anomaly_task(n_train, n_test_normal, n_test_anomaly, dim, shift, seed,
                           n_clusters=1, spread=1.0):
    """Gaussian-blob normal data and a shifted cluster as anomalies.

    Returns ``(train, test)`` with test labels NORMAL/ANOMALY.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=2.0 * spread, size=(n_clusters, dim)) if n_clusters > 1 \
        else np.zeros((1, dim))

    def draw_normal(m):
        which = rng.integers(n_clusters, size=m)
        return centers[which] + rng.normal(scale=spread, size=(m, dim))

    train = draw_normal(n_train)
    test_normal = draw_normal(n_test_normal)
    direction = np.ones(dim) / np.sqrt(dim)
    test_anom = rng.normal(scale=spread, size=(n_test_anomaly, dim)) + shift * direction
    test_x = np.vstack([test_normal, test_anom])
    test_y = np.concatenate([np.full(n_test_normal, NORMAL), np.full(n_test_anomaly, ANOMALY)])
    prov = f"synthetic blobs d={dim} clusters={n_clusters} shift={shift} seed={seed}"
    return (Dataset(train, None, "synthetic-train", prov),
            Dataset(test_x, test_y, "synthetic-test", prov))


# ---------------------------------------------------------------- sampler


@dataclass
class SamplerState:
    """Draws row indices uniformly, i.i.d. or as one random permutation pass."""

    n: int
    mode: str = WITH_REPLACEMENT
    rng: np.random.Generator = None
    permutation: np.ndarray | None = None
    cursor: int = 0

    @classmethod
    def create(cls, n, mode=WITH_REPLACEMENT, seed=None):
        if n < 1:
            raise InputError("sampler needs n >= 1")
        if mode not in SAMPLING_MODES:
            raise InputError(f"unknown sampling mode {mode!r}; use one of {SAMPLING_MODES}")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n) if mode == WITHOUT_REPLACEMENT else None
        return cls(n, mode, rng, perm, 0)

    @property
    def remaining(self):
        if self.mode == WITH_REPLACEMENT:
            return None
        return self.n - self.cursor

    def draw(self) -> int:
        if self.mode == WITH_REPLACEMENT:
            return int(self.rng.integers(self.n))
        if self.cursor >= self.n:
            raise SamplerExhaustedError(
                f"all {self.n} rows used without replacement; "
                f"use {WITH_REPLACEMENT!r} sampling for more iterations")
        i = int(self.permutation[self.cursor])
        self.cursor += 1
        return i


def next_sample(state: SamplerState, data: Dataset | None = None):
    """Return ``(row_index, state)``; the state is advanced in place."""
    if data is not None and data.n != state.n:
        raise InputError(f"sampler built for n={state.n}, dataset has {data.n} rows")
    return state.draw(), state
