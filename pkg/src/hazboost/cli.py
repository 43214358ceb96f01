"""``hazboost`` command line.

Exit status is 0 on success, 1 on a usage error and 2 when an input file
is missing, malformed or otherwise unusable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .boost import DEFAULT_GRID, cross_validate_one_se, fit
from .cox import ConvergenceError, SeparationError, fit_cox
from .evaluation import CRITERIA, label_of, summarize, sweep, write_curve, write_summary
from .flagging import DEFAULT_WINDOW, flag_instant, flag_window, read_paths, risk_path, write_flags, write_paths
from .ingestion import (
    DEFAULT_HORIZON,
    FormatError,
    clinical_defaults,
    load_dataset,
    read_defaults,
    split_by_patient,
    write_dataset,
    write_defaults,
)
from .serialize import ModelFormatError, load_model, save_model
from .simulate import SCENARIOS, HazardSpec, default_process, generate_dataset, write_simulation

__all__ = ["main", "run"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _threads(value) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _positive(value) -> float:
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _fraction(value) -> float:
    v = float(value)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return v


def _learning_rate(value) -> float:
    v = float(value)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1]")
    return v


def _count(value) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _int_list(value) -> list[int]:
    try:
        out = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return out


def _add_common(p):
    p.add_argument("--threads", type=_threads, default=None,
                   help="worker threads (default: $HAZBOOST_THREADS or 1)")
    p.add_argument("--seed", type=int, default=0)


def _add_data(p, required=True):
    p.add_argument("--timeline", required=required, help="timeline.csv")
    p.add_argument("--stays", required=required, help="stays.csv")
    p.add_argument("--defaults", help="defaults.csv (default: packaged clinical normal values)")
    p.add_argument("--horizon-hours", type=_positive, default=DEFAULT_HORIZON)
    p.add_argument("--exclude-stays", default="",
                   help="comma-separated stay ids, or @file with one id per line")


def _add_boost(p):
    p.add_argument("--num-trees", type=_count, default=75)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--learning-rate", type=_learning_rate, default=0.1)
    p.add_argument("--reg", type=float, default=1.0, help="L2 penalty on leaf values")
    p.add_argument("--max-bins", type=int, default=256)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hazboost", description="Boosted hazard estimation and mortality flags.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    _add_common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="time-interaction")
    p.add_argument("--stays", type=int, default=2000)
    p.add_argument("--features", type=int, default=3)
    p.add_argument("--censor-hours", type=_positive, default=DEFAULT_HORIZON)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario parameter (JSON value)")
    p.add_argument("--truth", action="store_true", help="also write truth.csv")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("ingest", help="impute, truncate and rewrite a cohort")
    _add_common(p)
    _add_data(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("split", help="patient-level train/test split")
    _add_common(p)
    _add_data(p)
    p.add_argument("--train-fraction", type=_fraction, default=0.8)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="fit a boosted hazard or Cox model")
    _add_common(p)
    _add_data(p)
    _add_boost(p)
    p.add_argument("--model-kind", choices=("boost", "cox"), default="boost")
    p.add_argument("--model-out", required=True)

    p = sub.add_parser("cv", help="K-fold cross-validation with the one-SE rule")
    _add_common(p)
    _add_data(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-trees", type=_int_list, default=sorted({m for m, _ in DEFAULT_GRID}))
    p.add_argument("--grid-depths", type=_int_list, default=sorted({d for _, d in DEFAULT_GRID}))
    p.add_argument("--learning-rate", type=_learning_rate, default=0.1)
    p.add_argument("--reg", type=float, default=1.0)
    p.add_argument("--max-bins", type=int, default=256)
    p.add_argument("--out", help="also write the CV table as CSV")

    p = sub.add_parser("predict", help="write risk paths")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="paths.csv")

    p = sub.add_parser("flag", help="flag times at one threshold")
    _add_common(p)
    p.add_argument("--paths", required=True, help="paths.csv from predict")
    p.add_argument("--criterion", choices=CRITERIA, default="window")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--window-hours", type=_positive, default=DEFAULT_WINDOW)
    p.add_argument("--out", required=True, help="flags.csv")

    p = sub.add_parser("evaluate", help="threshold sweep and AUCs")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", help="model file (risk paths are computed from the cohort)")
    p.add_argument("--paths", help="paths.csv from predict, instead of --model")
    p.add_argument("--criterion", choices=CRITERIA + ("both",), default="window")
    p.add_argument("--window-hours", type=_positive, default=DEFAULT_WINDOW)
    p.add_argument("--out", default="summary.csv", help="summary.csv")
    p.add_argument("--curve-out", help="curve.csv (single criterion only)")

    p = sub.add_parser("compare", help="boost and Cox on the same patient split")
    _add_common(p)
    _add_data(p)
    _add_boost(p)
    p.add_argument("--train-fraction", type=_fraction, default=0.8)
    p.add_argument("--window-hours", type=_positive, default=DEFAULT_WINDOW)
    p.add_argument("--out-dir", required=True)
    return parser


def _n_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("HAZBOOST_THREADS", "").strip()
    if not env:
        return 1
    try:
        return _threads(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"HAZBOOST_THREADS must be a positive integer, got {env!r}") from None


def _check_outputs(inputs: Sequence, outputs: Sequence):
    seen = {os.path.realpath(p) for p in inputs if p}
    for out in outputs:
        if out and os.path.realpath(out) in seen:
            raise UsageError(f"output {out} would overwrite an input")


def _exclusions(spec: str) -> list[str]:
    if spec.startswith("@"):
        with open(spec[1:], encoding="utf-8") as f:
            return [line.strip() for line in f if line.strip()]
    return [s.strip() for s in spec.split(",") if s.strip()]


def _defaults(args) -> dict:
    return read_defaults(args.defaults) if args.defaults else clinical_defaults()


def _load(args, n_threads: int):
    defaults = _defaults(args)
    dataset = load_dataset(
        args.timeline, args.stays, defaults,
        horizon=args.horizon_hours,
        exclude_stays=_exclusions(args.exclude_stays),
        n_threads=n_threads,
    )
    if not dataset:
        raise DataError("no stays left after exclusions")
    with open(args.timeline, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    return dataset, header[3:], defaults


def _data_inputs(args):
    return [args.timeline, args.stays, getattr(args, "defaults", None)]


def _fit(kind, train, names, args, n_threads):
    if kind == "cox":
        try:
            return fit_cox(train, feature_names=names)
        except (SeparationError, ConvergenceError) as exc:
            raise DataError(f"Cox fit failed: {exc}") from None
    return fit(
        train,
        num_trees=args.num_trees,
        max_depth=args.depth,
        learning_rate=args.learning_rate,
        reg_lambda=args.reg,
        max_bins=args.max_bins,
        feature_names=names,
        n_threads=n_threads,
    )


def _cmd_simulate(args, n_threads, out):
    if args.stays < 1:
        raise UsageError("--stays must be >= 1")
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        if key not in SCENARIOS[args.scenario]:
            raise UsageError(f"scenario {args.scenario} has no parameter {key!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"--param {key}: value is not valid JSON") from None
    try:
        spec = HazardSpec(args.scenario, params, censor_time=args.censor_hours)
        data = generate_dataset(spec, default_process(args.scenario, args.features), args.stays, args.seed)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    write_simulation(data, args.out_dir, truth=args.truth)
    n_events = sum(t.event for t in data.trajectories)
    print(f"wrote {len(data.trajectories)} stays ({n_events} deaths) to {args.out_dir}", file=out)


def _cmd_ingest(args, n_threads, out):
    _check_outputs(_data_inputs(args), [os.path.join(args.out_dir, "timeline.csv"),
                                        os.path.join(args.out_dir, "stays.csv")])
    dataset, names, defaults = _load(args, n_threads)
    write_dataset(dataset, args.out_dir, names)
    write_defaults(defaults, os.path.join(args.out_dir, "defaults.csv"))
    print(f"wrote {len(dataset)} stays to {args.out_dir}", file=out)


def _cmd_split(args, n_threads, out):
    train_dir = os.path.join(args.out_dir, "train")
    test_dir = os.path.join(args.out_dir, "test")
    _check_outputs(_data_inputs(args), [os.path.join(d, f) for d in (train_dir, test_dir)
                                        for f in ("timeline.csv", "stays.csv")])
    dataset, names, defaults = _load(args, n_threads)
    train, test = split_by_patient(dataset, args.train_fraction, args.seed)
    for d, part in ((train_dir, train), (test_dir, test)):
        write_dataset(part, d, names)
        write_defaults(defaults, os.path.join(d, "defaults.csv"))
    print(f"train: {len(train)} stays, test: {len(test)} stays", file=out)


def _cmd_train(args, n_threads, out):
    _check_outputs(_data_inputs(args), [args.model_out])
    dataset, names, _ = _load(args, n_threads)
    model = _fit(args.model_kind, dataset, names, args, n_threads)
    save_model(model, args.model_out)
    print(f"saved {args.model_kind} model to {args.model_out}", file=out)


def _cmd_cv(args, n_threads, out):
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    _check_outputs(_data_inputs(args), [args.out])
    dataset, names, _ = _load(args, n_threads)
    grid = [(m, d) for m in args.grid_trees for d in args.grid_depths]
    result = cross_validate_one_se(
        dataset, k=args.folds, grid=grid, learning_rate=args.learning_rate,
        reg_lambda=args.reg, seed=args.seed, n_threads=n_threads, max_bins=args.max_bins,
    )
    m, d = result.chosen
    print(f"chosen: num_trees={m} depth={d}", file=out)
    print("num_trees,depth,mean_loss,se", file=out)
    lines = [f"{m},{d},{mean!r},{se!r}" for m, d, mean, se in result.rows()]
    for line in lines:
        print(line, file=out)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write("num_trees,depth,mean_loss,se\n" + "".join(line + "\n" for line in lines))


def _cmd_predict(args, n_threads, out):
    _check_outputs(_data_inputs(args) + [args.model], [args.out])
    model = load_model(args.model)
    dataset, _, _ = _load(args, n_threads)
    write_paths([risk_path(model, t) for t in dataset], args.out)
    print(f"wrote risk paths for {len(dataset)} stays to {args.out}", file=out)


def _cmd_flag(args, n_threads, out):
    _check_outputs([args.paths], [args.out])
    paths = read_paths(args.paths)
    records = []
    for p in paths:
        if args.criterion == "instant":
            t = flag_instant(p, args.threshold)
        else:
            t = flag_window(p, args.threshold, args.window_hours)
        records.append((p.stay_id, args.criterion, args.threshold, t))
    write_flags(records, args.out)
    n = sum(r[3] is not None for r in records)
    print(f"flagged {n} of {len(records)} stays", file=out)


def _summary_rows(name, paths, labels, criteria, window, curve_out=None):
    rows = []
    for criterion in criteria:
        points = sweep(paths, labels, criterion, window)
        if curve_out:
            write_curve(points, curve_out)
        s = summarize(points)
        rows.append((name, criterion, window if criterion == "window" else None, s.auc_roc, s.auc_prc))
    return rows


def _baseline_rows(labels, criteria, window):
    rate = float(np.mean(labels))
    return [("baseline", c, window if c == "window" else None, 0.5, rate) for c in criteria]


def _cmd_evaluate(args, n_threads, out):
    if (args.model is None) == (args.paths is None):
        raise UsageError("give exactly one of --model or --paths")
    criteria = CRITERIA if args.criterion == "both" else (args.criterion,)
    if args.curve_out and len(criteria) > 1:
        raise UsageError("--curve-out needs a single --criterion")
    _check_outputs(_data_inputs(args) + [args.model, args.paths], [args.out, args.curve_out])
    dataset, _, _ = _load(args, n_threads)
    labels = {t.stay_id: label_of(t) for t in dataset}
    if args.model:
        model = load_model(args.model)
        name = "cox" if model.__class__.__name__ == "CoxModel" else "boost"
        paths = [risk_path(model, t) for t in dataset]
    else:
        name = "paths"
        paths = [p for p in read_paths(args.paths) if p.stay_id in labels]
        if len(paths) != len(labels):
            raise DataError("paths file does not cover every stay in the cohort")
    rows = _summary_rows(name, paths, labels, criteria, args.window_hours, args.curve_out)
    write_summary(rows, args.out)
    for r in rows:
        print(f"{r[0]} {r[1]}: auc_roc={r[3]:.4f} auc_prc={r[4]:.4f}", file=out)


def _cmd_compare(args, n_threads, out):
    summary = os.path.join(args.out_dir, "summary.csv")
    _check_outputs(_data_inputs(args), [summary])
    dataset, names, _ = _load(args, n_threads)
    train, test = split_by_patient(dataset, args.train_fraction, args.seed)
    labels = [label_of(t) for t in test]
    if all(labels) or not any(labels):
        raise DataError("the test split needs both deaths and survivors")
    rows = _baseline_rows(labels, CRITERIA, args.window_hours)
    for kind in ("cox", "boost"):
        model = _fit(kind, train, names, args, n_threads)
        paths = [risk_path(model, t) for t in test]
        rows += _summary_rows(kind, paths, labels, CRITERIA, args.window_hours)
    os.makedirs(args.out_dir, exist_ok=True)
    write_summary(rows, summary)
    for r in rows:
        w = "" if r[2] is None else f" ({r[2]:g} h)"
        print(f"{r[0]:<8} {r[1]}{w}: auc_roc={r[3]:.4f} auc_prc={r[4]:.4f}", file=out)


COMMANDS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "train": _cmd_train,
    "cv": _cmd_cv,
    "predict": _cmd_predict,
    "flag": _cmd_flag,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        n_threads = _n_threads(args)
        COMMANDS[args.command](args, n_threads, out)
    except UsageError as exc:
        print(exc, file=err)
        return 1
    except (DataError, FormatError, ModelFormatError) as exc:
        print(f"hazboost: error: {exc}", file=err)
        return 2
    except OSError as exc:
        print(f"hazboost: error: {exc.filename or ''}: {exc.strerror or exc}", file=err)
        return 2
    except ValueError as exc:
        print(f"hazboost: error: {exc}", file=err)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
