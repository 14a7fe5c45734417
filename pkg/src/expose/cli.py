"""Command-line interface: ``expose {features,train,score,eval,convergence}``.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 data validation, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (SAMPLING_MODES, WITH_REPLACEMENT, WITHOUT_REPLACEMENT, Dataset, KddPreprocessor,
                   load_csv, load_idx, make_anomaly_split, preprocess_kdd, read_kdd_records,
                   save_csv)
from .embedding import empirical_embedding, load_model, save_model
from .errors import DataFormatError, InputError, ModelFileError, NumericError
from .experiments import (ExperimentConfig, aggregate_runs, timed_experiment,
                          write_diagnostics_csv, write_manifest)
from .kernel import GENERATOR_ID, KernelSpec, build_rks_map, embed
from .scoring import calibrate_threshold, classification_error, predict, score_batch, write_scores_csv
from .sgd import EPSILON_MODES, OBJECTIVE, SgdConfig, run_sgd

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5

DEFAULT_EXPANSIONS = 20000


def derive_seed(seed, stream):
    """Independent 64-bit seed for a named sub-stream of the user seed."""
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1, dtype=np.uint64)[0])


def _add_data_options(p, required=True):
    p.add_argument("--data", required=required, metavar="PATH",
                   help="input file (images file for --format idx)")
    p.add_argument("--format", choices=("csv", "idx", "kdd"), default="csv",
                   help="input format (default: csv)")
    p.add_argument("--labels", metavar="PATH", help="IDX label file (--format idx)")
    p.add_argument("--has-labels", action="store_true",
                   help="CSV: last column holds integer labels")
    p.add_argument("--header", action="store_true", help="CSV: skip the first line")
    p.add_argument("--preprocess", metavar="PATH",
                   help="KDD preprocessing parameters (JSON); written by train, read by score/eval")


def _add_kernel_options(p):
    p.add_argument("--bandwidth", type=float, required=True,
                   help="Gaussian kernel bandwidth sigma^2")
    p.add_argument("--expansions", type=int, default=DEFAULT_EXPANSIONS,
                   help=f"random Fourier expansions r (default: {DEFAULT_EXPANSIONS})")


def _add_sgd_options(p, sampling_default):
    p.add_argument("--theta", type=float, default=1.0,
                   help="step size scale, gamma_t = theta/t (default: 1)")
    p.add_argument("--radius", type=float, default=1.0,
                   help="projection ball radius M (default: 1)")
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--iterations", type=int, metavar="T", help="number of SGD iterations")
    stop.add_argument("--epsilon", type=float,
                      help="target accuracy; T is derived from it")
    p.add_argument("--epsilon-mode", choices=EPSILON_MODES, default=OBJECTIVE,
                   help="accuracy measured on the objective or the parameter (default: objective)")
    p.add_argument("--sampling", choices=SAMPLING_MODES, default=sampling_default,
                   help=f"training sample draw (default: {sampling_default})")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expose", description="EXPoSE anomaly detection with constant-time SGD training.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("features", help="build a random Fourier feature map, optionally embed data")
    _add_data_options(p, required=False)
    p.add_argument("--dim", type=int, help="input dimension when no --data is given")
    _add_kernel_options(p)
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--out", metavar="PATH", help="write embedded rows as CSV")

    p = sub.add_parser("train", help="fit a model by SGD or as the full empirical embedding")
    _add_data_options(p)
    _add_kernel_options(p)
    _add_sgd_options(p, WITH_REPLACEMENT)
    p.add_argument("--full", action="store_true",
                   help="compute the exact empirical mean embedding instead of SGD")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--model", required=True, metavar="PATH", help="output model file")

    p = sub.add_parser("score", help="score rows with a trained model")
    p.add_argument("--model", required=True, metavar="PATH")
    _add_data_options(p)
    p.add_argument("--out", metavar="PATH", help="score CSV (default: stdout summary only)")

    p = sub.add_parser("eval", help="calibrate a threshold by cross-validation and report error")
    p.add_argument("--model", required=True, metavar="PATH")
    _add_data_options(p)
    p.add_argument("--normal-label", type=int, default=1,
                   help="label value of the normal class (default: 1)")
    p.add_argument("--out", metavar="PATH", help="score CSV with labels and predictions")

    p = sub.add_parser("convergence", help="SGD-vs-full convergence diagnostics")
    _add_data_options(p)
    _add_kernel_options(p)
    _add_sgd_options(p, WITHOUT_REPLACEMENT)
    p.add_argument("--normal-label", type=int, default=1,
                   help="label value of the normal class (default: 1)")
    p.add_argument("--test-size", type=int, default=10000,
                   help="held-out test rows (default: 10000)")
    p.add_argument("--eval-every", type=int, default=200,
                   help="checkpoint interval in iterations (default: 200)")
    p.add_argument("--repetitions", type=int, default=10,
                   help="independent runs to average (default: 10)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--workers", type=int, default=1,
                   help="processes for repetitions (default: 1)")
    p.add_argument("--include-bounds", action="store_true",
                   help="add M^2/t and M^2/(2t) bound columns")
    p.add_argument("--out", required=True, metavar="PATH", help="mean diagnostics CSV")
    p.add_argument("--runs-dir", metavar="DIR", help="also write one CSV per repetition here")
    p.add_argument("--manifest", metavar="PATH",
                   help="run manifest JSON (default: OUT with .manifest.json suffix)")
    return parser


def parse_args(argv):
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- loading


def _kdd_params_path(args):
    if args.preprocess:
        return Path(args.preprocess)
    if getattr(args, "model", None):
        return Path(str(args.model) + ".kdd.json")
    return None


def load_dataset(args, fit_kdd=False) -> Dataset:
    if args.format == "csv":
        return load_csv(args.data, has_labels=args.has_labels, header=args.header)
    if args.format == "idx":
        return load_idx(args.data, args.labels)
    records, raw_labels = read_kdd_records(args.data)
    params = _kdd_params_path(args)
    if fit_kdd:
        data, pre = preprocess_kdd(records, raw_labels=raw_labels)
        if params is not None:
            pre.save(params)
        return data
    if params is None or not params.exists():
        raise InputError(f"KDD preprocessing parameters not found at {params}; pass --preprocess")
    data, _ = preprocess_kdd(records, KddPreprocessor.load(params), raw_labels)
    return data


# ---------------------------------------------------------------- commands


def _cmd_features(args):
    if args.data:
        data = load_dataset(args, fit_kdd=True)
        dim = data.d
    elif args.dim:
        data, dim = None, args.dim
    else:
        raise InputError("features needs --data or --dim")
    fmap = build_rks_map(KernelSpec(args.bandwidth), dim, args.expansions, args.seed)
    print(f"d = {fmap.input_dim}, r = {fmap.expansions}, bandwidth = {fmap.bandwidth!r}, "
          f"seed = {fmap.seed}, generator = {GENERATOR_ID}, checksum = {fmap.checksum()}")
    if args.out:
        if data is None:
            raise InputError("--out requires --data")
        save_csv(Dataset(embed(fmap, data.features), data.labels, data.name), args.out)
        print(f"wrote {data.n} feature vectors of length {fmap.feature_dim} to {args.out}")
    return EXIT_OK


def _cmd_train(args):
    data = load_dataset(args, fit_kdd=True)
    fmap = build_rks_map(KernelSpec(args.bandwidth), data.d, args.expansions, args.seed)
    if args.full:
        model = empirical_embedding(fmap, data)
        print(f"full empirical embedding over n = {data.n} rows")
    else:
        if args.iterations is None and args.epsilon is None:
            raise InputError("train needs --iterations or --epsilon (or --full)")
        config = SgdConfig(theta=args.theta, ball_radius=args.radius,
                           iterations=args.iterations, epsilon=args.epsilon,
                           epsilon_mode=args.epsilon_mode, seed=derive_seed(args.seed, 1),
                           sampling=args.sampling)
        T = config.total_iterations
        if args.epsilon is not None:
            print(f"T = {T}")
        model = run_sgd(config, data, fmap)
        print(f"SGD finished after {T} iterations, |w| = {model.norm:.6f}")
    save_model(model, fmap, args.model)
    print(f"model written to {args.model}")
    return EXIT_OK


def _cmd_score(args):
    model, fmap = load_model(args.model)
    data = load_dataset(args)
    scores = score_batch(model, fmap, data.features)
    if args.out:
        write_scores_csv(args.out, scores, data.labels)
        print(f"wrote {len(scores)} scores to {args.out}")
    print(f"n = {len(scores)}, min = {scores.min():.6g}, mean = {scores.mean():.6g}, "
          f"max = {scores.max():.6g}")
    return EXIT_OK


def _cmd_eval(args):
    model, fmap = load_model(args.model)
    data = load_dataset(args)
    if data.labels is None:
        raise InputError("eval needs labelled data")
    labels = (data.labels == args.normal_label).astype(np.int64)
    scores = score_batch(model, fmap, data.features)
    cal = calibrate_threshold(scores, labels)
    err = classification_error(scores, labels, cal)
    if args.out:
        write_scores_csv(args.out, scores, labels, predict(scores, cal))
    print(f"tau = {cal.tau!r}, validation accuracy = {cal.validation_accuracy:.6f}, "
          f"classification error = {err:.6f}")
    return EXIT_OK


def _cmd_convergence(args):
    if args.iterations is None and args.epsilon is None:
        raise InputError("convergence needs --iterations or --epsilon")
    data = load_dataset(args, fit_kdd=True)
    train, test = make_anomaly_split(data, args.normal_label, args.test_size,
                                     derive_seed(args.seed, 2))
    cfg = ExperimentConfig(train=train, test=test, bandwidth=args.bandwidth,
                           expansions=args.expansions, iterations=args.iterations,
                           epsilon=args.epsilon, epsilon_mode=args.epsilon_mode,
                           eval_every=args.eval_every, repetitions=args.repetitions,
                           seed=args.seed, theta=args.theta, ball_radius=args.radius,
                           sampling=args.sampling)
    if args.epsilon is not None:
        print(f"T = {cfg.sgd_config(0).total_iterations}")
    series, seconds = timed_experiment(cfg, workers=args.workers)
    mean = aggregate_runs(series)
    write_diagnostics_csv(mean, args.out, include_bounds=args.include_bounds, M=args.radius)
    if args.runs_dir:
        runs = Path(args.runs_dir)
        runs.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(series):
            write_diagnostics_csv(s, runs / f"run_{i:03d}.csv", include_bounds=args.include_bounds,
                                  M=args.radius)
    manifest = args.manifest or str(Path(args.out).with_suffix(".manifest.json"))
    write_manifest(manifest, cfg, seconds, {"argv": sys.argv[1:]})
    last = mean[-1] if mean else None
    if last is not None:
        print(f"t = {last.t}: objective gap = {last.objective_gap:.3g}, "
              f"|w_t - mu_n| = {last.param_dist:.3g}, err_sgd = {last.err_sgd:.4f}, "
              f"err_full = {last.err_full:.4f}")
    print(f"wrote {len(mean)} records to {args.out} ({seconds:.1f} s)")
    return EXIT_OK


_COMMANDS = {
    "features": _cmd_features,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "convergence": _cmd_convergence,
}


def execute(args) -> int:
    try:
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"expose: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InputError, DataFormatError, ModelFileError) as exc:
        print(f"expose: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"expose: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
