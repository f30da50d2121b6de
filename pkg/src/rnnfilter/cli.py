"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors (bad flags, invalid
configuration, unreadable inputs), 2 on failures during computation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dynamics, experiments
from ._validation import ConfigurationError
from .cells import CELL_KINDS, init_params, load_model, save_model
from .predict import fast_predict, moving_window_predict, write_prediction_csv
from .signal import (
    WAVES,
    DatasetSpec,
    add_noise,
    build_dataset,
    read_dataset_csv,
    read_series_csv,
    sample_series,
    write_dataset_csv,
    write_series_csv,
)
from .training import TrainConfig, train

logger = logging.getLogger("rnnfilter")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"malformed model file {path}: {exc}") from exc


def _read_series(path):
    try:
        return read_series_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read series {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"malformed series file {path}: {exc}") from exc


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(report, out: Path, seeds=(), model_hash=None):
    report.to_csv(out / f"{report.name}.csv")
    report.write_manifest(out / f"{report.name}.manifest.json", seeds, model_hash)


# -- subcommands ------------------------------------------------------------

def cmd_gen_data(args):
    if args.window is not None:
        clean = sample_series(args.wave, args.t0, args.window, args.dt)
        write_series_csv(add_noise(clean, args.noise, args.seed), args.out)
        return
    spec = DatasetSpec(
        segments_per_wave=args.segments, length_min=args.length_min, length_max=args.length_max,
        noise_amplitude=args.noise, dt=args.dt, seed=args.seed, waves=tuple(args.waves),
    ).validate()
    write_dataset_csv(build_dataset(spec), args.out)


def cmd_train(args):
    cfg = TrainConfig(
        epochs=args.epochs, validation_fraction=args.val, learning_rate=args.lr,
        batch_size=args.batch_size, seed=args.seed, clip_norm=args.clip,
    ).validate()
    if args.data:
        try:
            data = read_dataset_csv(args.data, DatasetSpec(dt=args.dt))
        except OSError as exc:
            raise UsageError(f"cannot read dataset {args.data}: {exc}") from exc
    else:
        data = build_dataset(DatasetSpec(segments_per_wave=args.segments, noise_amplitude=args.noise,
                                         dt=args.dt, seed=args.seed).validate())
    model = init_params(args.cell, args.neurons, 1, args.seed)
    model, history = train(model, data, cfg)
    save_model(model, args.out)
    if args.history:
        history.to_csv(args.history)


def _predict(args, fn):
    model = _read_model(args.model)
    X = _read_series(args.input)
    if args.window is not None:
        if args.window > len(X):
            raise UsageError(f"--window {args.window} exceeds input length {len(X)}")
        X = X.with_points(X.points[-args.window:]) if args.window < len(X) else X
    result = fn(model, X, args.horizon)
    reference = None
    if args.reference_wave:
        reference = sample_series(args.reference_wave, X.t0 + len(X) * X.dt, args.horizon, X.dt)
    write_prediction_csv(result, args.out, reference)


def cmd_predict(args):
    _predict(args, moving_window_predict)


def cmd_fast_predict(args):
    _predict(args, fast_predict)


def cmd_diagnose(args):
    model = _read_model(args.model)
    X = _read_series(args.input)
    _, traces = dynamics.traced_moving_window(model, X, args.horizon)
    out = _outdir(args.out)
    spaces = ["hidden"] + (["cell"] if model.kind == "lstm" else [])
    for space in spaces:
        for j in range(1, min(args.steps, args.horizon - 1) + 1):
            series = dynamics.shifted_difference(traces, j, space)
            fits, notes = [], []
            try:
                fits.append(dynamics.fit_decay(series))
            except ValueError as exc:
                # differences that reach exactly zero leave no log-linear fit
                notes.append(f"fit skipped: {exc}")
            dynamics.write_series_csv(
                series, out / f"delta_{space}_j{j}.csv",
                meta={"j": j, "space": space, "a": args.noise_label, "kind": model.kind},
                fits=fits, notes=notes,
            )
    eps = dynamics.epsilon_gap(traces)
    dynamics.write_series_csv(eps, out / "epsilon.csv", meta={"series": "epsilon", "a": args.noise_label})


def cmd_contract(args):
    model = _read_model(args.model)
    if model.kind != "basic":
        raise UsageError("contract needs a basic-cell model")
    X = _read_series(args.input)
    rep = dynamics.contraction_report(model, X, args.horizon)
    report = experiments.ExperimentReport(
        "contraction",
        {"horizon": args.horizon, "fraction_contracting": rep.fraction_contracting,
         "measured_fraction": rep.measured_fraction, "identity_residual": rep.identity_residual},
        [
            {"j": j, "i": i, "lambda_max": float(lam.max()), "lambda_min": float(lam.min()),
             "contracting": bool(c), "measured_contracting": bool(mc)}
            for (j, i), lam, c, mc in zip(rep.steps, rep.eigenvalues, rep.contracting, rep.measured_contracting)
        ],
    )
    _write_report(report, _outdir(args.out), model_hash=model.fingerprint())


def cmd_bench(args):
    model = _read_model(args.model)
    report = experiments.speedup_bench(model, args.window, args.horizon, args.repetitions, args.seed)
    _write_report(report, _outdir(args.out), [args.seed], model.fingerprint())


def cmd_robust(args):
    model = _read_model(args.model)
    seeds = list(range(args.seed, args.seed + args.seeds))
    out = _outdir(args.out)
    dec = experiments.decay_experiment(model, args.wave, args.rates, args.window, args.horizon, seeds, args.noise)
    shf = experiments.reshuffle_experiment(model, args.wave, args.fractions, args.window, args.horizon,
                                           seeds, args.noise)
    for rep in (dec, shf):
        _write_report(rep, out, seeds, model.fingerprint())


def cmd_quality_sweep(args):
    cfg = TrainConfig(epochs=args.epochs, validation_fraction=args.val, learning_rate=args.lr,
                      batch_size=args.batch_size, seed=args.seed).validate()
    data = build_dataset(DatasetSpec(segments_per_wave=args.segments, noise_amplitude=args.noise,
                                     seed=args.seed).validate())
    seeds = list(range(args.seed, args.seed + args.seeds))
    report = experiments.quality_sweep(args.cells, args.neurons, data, cfg, args.eval_windows, seeds,
                                       args.wave, args.window, args.horizon, args.noise, args.threads)
    _write_report(report, _outdir(args.out), seeds)


# -- parser -----------------------------------------------------------------

def _add_common(p, seed_required=False):
    p.add_argument("--config", help="JSON file of flag defaults (unknown keys rejected)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for parallel sections")
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_training(p):
    p.add_argument("--cell", choices=CELL_KINDS, default="lstm")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--val", type=float, default=0.2, help="validation fraction")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--segments", type=int, default=6000, help="segments per wave")
    p.add_argument("--noise", type=float, default=0.15, help="noise amplitude a")


def _add_prediction(p):
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="series CSV (t,x1..xd)")
    p.add_argument("--horizon", type=int, default=100, help="number of predicted points p")
    p.add_argument("--window", type=int, default=None, help="use the last m input points")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rnnfilter", description="Train small recurrent filters and extrapolate noisy periodic series.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write a training dataset or a single noisy window")
    _add_common(p, seed_required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segments", type=int, default=6000)
    p.add_argument("--length-min", type=int, default=5)
    p.add_argument("--length-max", type=int, default=150)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--waves", nargs="+", choices=WAVES, default=list(WAVES))
    p.add_argument("--window", type=int, default=None, help="write one series of m points instead")
    p.add_argument("--wave", choices=WAVES, default="sine")
    p.add_argument("--t0", type=float, default=0.0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset CSV or a generated dataset")
    _add_common(p, seed_required=True)
    _add_training(p)
    p.add_argument("--neurons", type=int, default=10)
    p.add_argument("--data", help="dataset CSV; generated from --seed when omitted")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=None, help="global gradient-norm clip")
    p.add_argument("--history", help="write epoch,train_loss,val_loss CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("predict", cmd_predict, "moving-window prediction"),
                             ("fast-predict", cmd_fast_predict, "reduced-map prediction")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_prediction(p)
        p.add_argument("--reference-wave", choices=WAVES, help="append the clean continuation")
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose", help="shifted differences, decay fits and epsilon gaps")
    _add_common(p)
    _add_prediction(p)
    p.add_argument("--steps", type=int, default=1, help="prediction steps j to export")
    p.add_argument("--noise-label", default="", help="amplitude recorded in headers")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("contract", help="contraction analysis of a basic-cell model")
    _add_common(p)
    _add_prediction(p)
    p.set_defaults(func=cmd_contract)

    p = sub.add_parser("bench", help="wall-clock speedup of the reduced map")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--repetitions", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("robust", help="input decay and reshuffling experiments")
    _add_common(p, seed_required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--wave", choices=WAVES, default="sine")
    p.add_argument("--window", type=int, default=75)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--rates", type=float, nargs="+", default=[0.0, 0.002, 0.005, 0.008])
    p.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.2, 0.4])
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("quality-sweep", help="train per (cell, n) and score extrapolation quality")
    _add_common(p, seed_required=True)
    _add_training(p)
    p.add_argument("--cells", nargs="+", choices=CELL_KINDS, default=["lstm"])
    p.add_argument("--neurons", type=int, nargs="+", default=[5, 10, 20])
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--eval-windows", type=int, default=5)
    p.add_argument("--wave", choices=WAVES, default="sine")
    p.add_argument("--window", type=int, default=75)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quality_sweep)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config``; unknown keys are usage errors."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if not known.config or command not in subparsers:
        return parser.parse_args(argv)
    try:
        with open(known.config) as fh:
            conf = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(conf, dict):
        raise UsageError("config must be a JSON object")
    sub = subparsers[command]
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    dests = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(conf) - dests)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**conf)
    for action in sub._actions:
        if action.dest in conf:
            action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"rnnfilter {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("failure", exc_info=True)
        print(f"rnnfilter {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
