"""EXPoSE scores eta(y) = <phi(y), w>, threshold calibration and error rates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import ANOMALY, NORMAL
from .embedding import ModelState
from .errors import InputError
from .kernel import RksFeatureMap, embed

DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class ThresholdCalibration:
    """Decision rule: a score s is normal iff s >= tau."""

    tau: float
    validation_accuracy: float
    method: str = "5-fold-cv-midpoints"


def _check(w: ModelState, fmap: RksFeatureMap):
    if w.fingerprint != fmap.fingerprint:
        raise InputError(f"model fingerprint {w.fingerprint} does not match map {fmap.fingerprint}")


def score(w: ModelState, fmap: RksFeatureMap, y) -> float:
    _check(w, fmap)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise InputError(f"score expects one vector, got shape {y.shape}")
    return float(embed(fmap, y) @ w.weights)


def score_batch(w: ModelState, fmap: RksFeatureMap, ys, chunk=4096) -> np.ndarray:
    _check(w, fmap)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 2:
        raise InputError(f"score_batch expects an m x d matrix, got shape {ys.shape}")
    out = np.empty(ys.shape[0])
    for start in range(0, ys.shape[0], chunk):
        out[start:start + chunk] = embed(fmap, ys[start:start + chunk]) @ w.weights
    return out


def _binary(labels, m):
    labels = np.asarray(labels).astype(np.int64).ravel()
    if labels.shape[0] != m:
        raise InputError(f"{m} scores but {labels.shape[0]} labels")
    if not ((labels == NORMAL) | (labels == ANOMALY)).all():
        raise InputError(f"labels must be {NORMAL} (normal) or {ANOMALY} (anomaly)")
    return labels


def _fold_accuracy(scores, labels, candidates):
    """Accuracy of every candidate threshold on one fold, vectorized."""
    normal = np.sort(scores[labels == NORMAL])
    anomaly = np.sort(scores[labels == ANOMALY])
    normals_kept = normal.size - np.searchsorted(normal, candidates, side="left")
    anomalies_caught = np.searchsorted(anomaly, candidates, side="left")
    return (normals_kept + anomalies_caught) / scores.size


def calibrate_threshold(scores, labels, folds=DEFAULT_FOLDS) -> ThresholdCalibration:
    """Choose tau by k-fold cross-validated accuracy.

    Candidates are the smallest score and the midpoints between consecutive
    distinct scores. Row i belongs to fold ``i % k``; the candidate with the
    highest mean fold accuracy wins, ties going to the larger tau. If all
    scores are equal, tau is that value and every point is called normal.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _binary(labels, scores.size)
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    if np.unique(labels).size < 2:
        raise InputError("calibration needs both normal and anomaly labels")
    uniq = np.unique(scores)
    if uniq.size == 1:
        return ThresholdCalibration(float(uniq[0]), float(np.mean(labels == NORMAL)), "degenerate")
    candidates = np.concatenate([uniq[:1], 0.5 * (uniq[:-1] + uniq[1:])])
    k = min(folds, scores.size)
    fold_of = np.arange(scores.size) % k
    acc = np.zeros(candidates.size)
    for f in range(k):
        sel = fold_of == f
        acc += _fold_accuracy(scores[sel], labels[sel], candidates)
    acc /= k
    best = np.flatnonzero(acc >= acc.max() - 1e-12)[-1]
    return ThresholdCalibration(float(candidates[best]), float(acc[best]), f"{k}-fold-cv-midpoints")


def classify(s, cal: ThresholdCalibration):
    """Return ``"normal"`` or ``"anomaly"`` for a score; s == tau counts as normal."""
    return "normal" if s >= cal.tau else "anomaly"


def predict(scores, cal: ThresholdCalibration) -> np.ndarray:
    return np.where(np.asarray(scores) >= cal.tau, NORMAL, ANOMALY)


def classification_error(scores, labels, cal: ThresholdCalibration) -> float:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _binary(labels, scores.size)
    return float(np.mean(predict(scores, cal) != labels))


def write_scores_csv(path, scores, labels=None, predictions=None):
    """CSV with columns index, score and optionally label, prediction (1 normal, 0 anomaly)."""
    header = ["index", "score"]
    if labels is not None:
        header.append("label")
    if predictions is not None:
        header.append("prediction")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, s in enumerate(scores):
            row = [i, repr(float(s))]
            if labels is not None:
                row.append(int(labels[i]))
            if predictions is not None:
                row.append(int(predictions[i]))
            writer.writerow(row)
