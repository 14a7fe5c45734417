"""Empirical kernel mean embedding, the EXPoSE objective, and model files."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import (ChecksumError, InputError, ModelConsistencyError, NumericError,
                     TruncatedModelError, VersionMismatchError)
from .kernel import GENERATOR_ID, KernelSpec, RksFeatureMap, build_rks_map, embed

MODEL_TAG = "EXPOSE-MODEL"
MODEL_VERSION = 1

_CHUNK_ROWS = 4096


@dataclass(frozen=True, eq=False)
class ModelState:
    """Weights w in the feature space of one RKS map, plus the iteration count t.

    ``fingerprint`` is ``(seed, r, d, bandwidth)`` of that map.
    """

    weights: np.ndarray
    iteration: int
    fingerprint: tuple

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise InputError(f"weights must be a vector, got shape {w.shape}")
        if len(w) != 2 * self.fingerprint[1]:
            raise InputError(f"weights have length {len(w)}, map needs {2 * self.fingerprint[1]}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "fingerprint", tuple(self.fingerprint))

    @classmethod
    def zeros(cls, fmap: RksFeatureMap, iteration=1):
        return cls(np.zeros(fmap.feature_dim), iteration, fmap.fingerprint)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))


def _check_dataset(fmap, data):
    if not isinstance(data, Dataset):
        data = Dataset(data)
    if data.d != fmap.input_dim:
        raise InputError(f"dataset has d={data.d}, feature map expects d={fmap.input_dim}")
    return data


def empirical_embedding(fmap: RksFeatureMap, data) -> ModelState:
    """Mean of the embedded rows, (1/n) sum_i phi(x_i).

    Rows are embedded in chunks; chunk sums are accumulated with Neumaier
    compensation so the result is insensitive to row order.
    """
    data = _check_dataset(fmap, data)
    total = np.zeros(fmap.feature_dim)
    comp = np.zeros(fmap.feature_dim)
    for start in range(0, data.n, _CHUNK_ROWS):
        part = embed(fmap, data.features[start:start + _CHUNK_ROWS]).sum(axis=0)
        t = total + part
        comp += np.where(np.abs(total) >= np.abs(part), (total - t) + part, (part - t) + total)
        total = t
    mean = (total + comp) / data.n
    return ModelState(mean, data.n, fmap.fingerprint)


def _check_pair(w: ModelState, mu: ModelState):
    if w.fingerprint != mu.fingerprint:
        raise InputError(f"feature map mismatch: {w.fingerprint} vs {mu.fingerprint}")


def objective_value(w: ModelState, mu_n: ModelState) -> float:
    """f(w) = 1/2 <w, w> - <mu_n, w>."""
    _check_pair(w, mu_n)
    return float(0.5 * (w.weights @ w.weights) - mu_n.weights @ w.weights)


def objective_gap(w: ModelState, mu_n: ModelState) -> float:
    """f(w) - f(mu_n); equals 1/2 |w - mu_n|^2, which is checked on every call."""
    gap = objective_value(w, mu_n) - objective_value(mu_n, mu_n)
    diff = w.weights - mu_n.weights
    half_sq = 0.5 * float(diff @ diff)
    if not np.isfinite(gap) or abs(gap - half_sq) > 1e-9:
        raise NumericError(f"objective gap {gap!r} disagrees with 1/2|w - mu|^2 = {half_sq!r}")
    return gap


# ---------------------------------------------------------------- persistence


def _weights_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def save_model(w: ModelState, fmap: RksFeatureMap, path):
    if w.fingerprint != fmap.fingerprint:
        raise InputError(f"model fingerprint {w.fingerprint} does not match map {fmap.fingerprint}")
    payload = np.ascontiguousarray(w.weights, dtype="<f8").tobytes()
    header = " ".join([
        MODEL_TAG,
        f"version={MODEL_VERSION}",
        f"d={fmap.input_dim}",
        f"r={fmap.expansions}",
        f"bandwidth={float(fmap.bandwidth)!r}",
        f"seed={int(fmap.seed)}",
        f"t={int(w.iteration)}",
        f"weights={len(w.weights)}",
        f"generator={GENERATOR_ID}",
        f"zsum={fmap.checksum()}",
        f"wsum={_weights_digest(payload)}",
    ])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(payload)


_REQUIRED_FIELDS = ("version", "d", "r", "bandwidth", "seed", "t", "weights",
                    "generator", "zsum", "wsum")


def _parse_header(line: bytes, path):
    try:
        tokens = line.decode("ascii").split()
    except UnicodeDecodeError:
        raise TruncatedModelError(f"{path}: header is not ASCII text") from None
    if not tokens or tokens[0] != MODEL_TAG:
        raise VersionMismatchError(f"{path}: not an EXPoSE model file (missing {MODEL_TAG} tag)")
    fields = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ModelConsistencyError(f"{path}: malformed header token {tok!r}")
        fields[key] = value
    if fields.get("version") != str(MODEL_VERSION):
        raise VersionMismatchError(
            f"{path}: model format version {fields.get('version')}, "
            f"this build reads version {MODEL_VERSION}")
    missing = [k for k in _REQUIRED_FIELDS if k not in fields]
    if missing:
        raise TruncatedModelError(f"{path}: header lacks fields {missing}")
    return fields


def load_model(path):
    """Read a model file; returns ``(ModelState, RksFeatureMap)``.

    The feature map is regenerated from (seed, r, d, bandwidth) and checked
    against the stored first-row checksum.
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise TruncatedModelError(f"{path}: no complete header line")
    fields = _parse_header(raw[:newline], path)
    if fields["generator"] != GENERATOR_ID:
        raise ChecksumError(
            f"{path}: written with generator {fields['generator']!r}, "
            f"this build uses {GENERATOR_ID!r}")
    try:
        d, r, seed, t, count = (int(fields[k]) for k in ("d", "r", "seed", "t", "weights"))
        bandwidth = float(fields["bandwidth"])
    except ValueError as exc:
        raise ModelConsistencyError(f"{path}: bad numeric header field: {exc}") from None
    if count != 2 * r:
        raise ModelConsistencyError(
            f"{path}: header declares r={r} (needs {2 * r} weights) but weight count is {count}",
            declared=2 * r, found=count)
    payload = raw[newline + 1:]
    expected = 8 * count
    if len(payload) < expected:
        raise TruncatedModelError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise ModelConsistencyError(
            f"{path}: payload holds {len(payload) // 8} weights, header declares {count}",
            declared=count, found=len(payload) // 8)
    if _weights_digest(payload) != fields["wsum"]:
        raise ChecksumError(f"{path}: weight checksum mismatch")
    fmap = build_rks_map(KernelSpec(bandwidth), d, r, seed)
    if fmap.checksum() != fields["zsum"]:
        raise ChecksumError(f"{path}: regenerated frequency matrix does not match stored checksum")
    weights = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return ModelState(weights, t, fmap.fingerprint), fmap
