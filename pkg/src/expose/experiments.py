"""Convergence diagnostics: SGD iterate versus the empirical embedding over time.

Each repetition draws a fresh feature map, computes the empirical embedding
of the training split once, then runs SGD and records at every checkpoint
the objective gap, the parameter distance, the mean score deviation on the
test set and the classification errors of both models.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import WITHOUT_REPLACEMENT, Dataset
from .embedding import empirical_embedding, objective_gap
from .errors import InputError
from .kernel import GENERATOR_ID, KernelSpec, build_rks_map, embed
from .scoring import calibrate_threshold, classification_error
from .sgd import OBJECTIVE, SgdConfig, run_sgd

# Test-set feature matrices above this size are recomputed per checkpoint.
_TEST_CACHE_BYTES = 512 * 2**20


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: int
    objective_gap: float
    param_dist: float
    mean_score_dev: float
    err_sgd: float
    err_full: float


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    train: Dataset
    test: Dataset
    bandwidth: float
    expansions: int
    iterations: Optional[int] = None
    epsilon: Optional[float] = None
    epsilon_mode: str = OBJECTIVE
    eval_every: int = 200
    repetitions: int = 10
    seed: int = 0
    theta: float = 1.0
    ball_radius: float = 1.0
    sampling: str = WITHOUT_REPLACEMENT

    def __post_init__(self):
        if self.eval_every < 1:
            raise InputError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.repetitions < 1:
            raise InputError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.train.d != self.test.d:
            raise InputError(f"train has d={self.train.d}, test has d={self.test.d}")
        KernelSpec(self.bandwidth)
        self.sgd_config(0)

    def sgd_config(self, seed) -> SgdConfig:
        return SgdConfig(theta=self.theta, ball_radius=self.ball_radius,
                         iterations=self.iterations, epsilon=self.epsilon,
                         epsilon_mode=self.epsilon_mode, seed=int(seed),
                         sampling=self.sampling)

    def describe(self) -> dict:
        """JSON-friendly echo of every scalar setting plus dataset summaries."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Dataset):
                value = {"name": value.name, "n": value.n, "d": value.d,
                         "provenance": value.provenance}
            out[f.name] = value
        out["total_iterations"] = self.sgd_config(0).total_iterations
        return out


def repetition_seeds(cfg: ExperimentConfig):
    """``[(map_seed, sampler_seed), ...]``, one independent pair per repetition."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.repetitions)
    return [tuple(int(s) for s in c.generate_state(2, dtype=np.uint64)) for c in children]


def _errors(scores, labels):
    if labels is None:
        return float("nan")
    cal = calibrate_threshold(scores, labels)
    return classification_error(scores, labels, cal)


def _run_repetition(cfg: ExperimentConfig, map_seed: int, sampler_seed: int):
    fmap = build_rks_map(KernelSpec(cfg.bandwidth), cfg.train.d, cfg.expansions, map_seed)
    mu = empirical_embedding(fmap, cfg.train)
    test_x, labels = cfg.test.features, cfg.test.labels
    cached = None
    if test_x.shape[0] * fmap.feature_dim * 8 <= _TEST_CACHE_BYTES:
        cached = embed(fmap, test_x)

    def test_scores(weights):
        if cached is not None:
            return cached @ weights
        out = np.empty(test_x.shape[0])
        for start in range(0, test_x.shape[0], 1024):
            out[start:start + 1024] = embed(fmap, test_x[start:start + 1024]) @ weights
        return out

    # the full model does not change with t
    eta_n = test_scores(mu.weights)
    err_full = _errors(eta_n, labels)
    records = []

    def observe(state, rescaled):
        t = state.iteration - 1
        if t % cfg.eval_every:
            return
        eta_t = test_scores(state.weights)
        records.append(DiagnosticsRecord(
            t=t,
            objective_gap=objective_gap(state, mu),
            param_dist=float(np.linalg.norm(state.weights - mu.weights)),
            mean_score_dev=float(np.mean(np.abs(eta_t - eta_n))),
            err_sgd=_errors(eta_t, labels),
            err_full=err_full,
        ))

    run_sgd(cfg.sgd_config(sampler_seed), cfg.train, fmap, callback=observe)
    return records


def run_convergence_experiment(cfg: ExperimentConfig, workers: int = 1):
    """One list of DiagnosticsRecord per repetition, checkpoints every ``eval_every`` steps."""
    seeds = repetition_seeds(cfg)
    if workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_repetition, cfg, a, b) for a, b in seeds]
            return [f.result() for f in futures]
    return [_run_repetition(cfg, a, b) for a, b in seeds]


def aggregate_runs(series_list):
    """Pointwise mean of every record field across runs with identical t grids."""
    series_list = [list(s) for s in series_list]
    if not series_list:
        raise InputError("nothing to aggregate")
    grid = [r.t for r in series_list[0]]
    for k, s in enumerate(series_list[1:], start=1):
        if [r.t for r in s] != grid:
            raise InputError(f"run {k} has a different checkpoint grid than run 0")
    out = []
    for i, t in enumerate(grid):
        values = {name: float(np.mean([getattr(s[i], name) for s in series_list]))
                  for name in RECORD_FIELDS if name != "t"}
        out.append(DiagnosticsRecord(t=t, **values))
    return out


def write_diagnostics_csv(series, path, include_bounds=False, M=1.0):
    header = list(RECORD_FIELDS)
    if include_bounds:
        header += ["bound_param", "bound_obj"]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in series:
                row = [r.t] + [repr(float(getattr(r, name))) for name in RECORD_FIELDS[1:]]
                if include_bounds:
                    row += [repr(M**2 / r.t), repr(M**2 / (2 * r.t))]
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write diagnostics to {path}: {exc}") from exc


def read_diagnostics_csv(path):
    """Parse a diagnostics CSV back into records (bound columns are dropped)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [DiagnosticsRecord(t=int(row["t"]),
                                  **{k: float(row[k]) for k in RECORD_FIELDS[1:]})
                for row in reader]


def write_manifest(path, cfg: ExperimentConfig, wall_clock_seconds: float, extra=None):
    manifest = {
        "config": cfg.describe(),
        "seeds": [{"map_seed": a, "sampler_seed": b} for a, b in repetition_seeds(cfg)],
        "generator": GENERATOR_ID,
        "wall_clock_seconds": wall_clock_seconds,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2))
    return manifest


def timed_experiment(cfg: ExperimentConfig, workers: int = 1):
    """Run the experiment and return ``(series_list, wall_clock_seconds)``."""
    start = time.perf_counter()
    series = run_convergence_experiment(cfg, workers=workers)
    return series, time.perf_counter() - start


def records_as_dicts(series):
    return [asdict(r) for r in series]
