"""Command-line entry point: ``horizon-abstain <subcommand> [flags]``.

Errors go to stderr as a single ``error: <kind>: <message>`` line with a
nonzero exit code (2 usage, 3 bad input, 4 training failure). A failed
``oracle-check`` exits with 1.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import data, evaluation, oracle
from .calibration import CoverageSpec, LagrangePolicy, SelectionTable, calibrate_full, calibrate_lagrange, policy_from_json
from .errors import AbstainError, InputDomainError, ParseError, TrainingError
from .forecaster import LinearTwoHeadModel, fit_beta_nll, fit_two_stage, mean_squared_error, predict_windows
from .policy import SeededRng, decide_full_batch, decide_lagrange_batch
from .risk import build_profiles

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_TRAINING = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument types ------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _coverage(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"coverage must be in (0, 1], got {v}")
    return v


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _coverage_list(text):
    values = _float_list(text)
    if not values or any(not 0.0 < v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError(f"coverages must be in (0, 1], got {text!r}")
    return values


def _seed_list(text):
    return [_seed(x) for x in text.split(",") if x.strip()]


def _strategy_list(text):
    try:
        return [evaluation.normalize_strategy(x) for x in text.split(",") if x.strip()]
    except InputDomainError as exc:
        raise argparse.ArgumentTypeError(str(exc))


# -- helpers -------------------------------------------------------------------------


def _load_series(args):
    return data.read_series_csv(args.data, T=getattr(args, "t", None), H=getattr(args, "h", None))


def _bundles_from_args(args):
    """Forecast bundles from ``--predictions`` or from ``--model`` applied to ``--data``."""
    if args.predictions:
        return data.read_predictions_csv(args.predictions)
    if not args.data:
        raise UsageError("--model needs --data")
    model = LinearTwoHeadModel.load(args.model)
    return predict_windows(model, _load_series(args))


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _fit(args, train, H):
    if args.method == "two-stage":
        return fit_two_stage(train, args.lag, H)
    return fit_beta_nll(train, args.lag, H, beta=args.beta, epochs=args.epochs,
                        learning_rate=args.lr, seed=args.seed)


# -- subcommands ---------------------------------------------------------------------


def cmd_generate(args):
    cfg = data.SyntheticConfig(
        n_series=args.n, T=args.t, H=args.h, ar_coeff=args.ar, base_noise_sd=args.noise,
        noise_amplification=args.amp, seed=args.seed,
    )
    windows, truth = data.generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    data.write_series_csv(os.path.join(args.out, "series.csv"), windows)
    data.write_variances_csv(os.path.join(args.out, "variances.csv"), [w.id for w in windows], truth)
    print(f"wrote {len(windows)} series to {args.out}")
    return 0


def cmd_split(args):
    windows = data.read_series_csv(args.data)
    parts = data.split_60_20_20(windows, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for name, part in zip(("train", "calib", "test"), parts):
        data.write_series_csv(os.path.join(args.out, f"{name}.csv"), part)
    print(" ".join(f"{n}={len(p)}" for n, p in zip(("train", "calib", "test"), parts)))
    return 0


def cmd_fit(args):
    if args.t is None and args.h is None:
        raise UsageError("fit needs --t or --h to split each series into past and future")
    train = _load_series(args)
    if any(w.future is None for w in train):
        raise InputDomainError("training series need a non-empty future")
    H = len(train[0].future)
    model = _fit(args, train, H)
    model.save(args.out_model)
    print(f"method={args.method} train_mse={mean_squared_error(model, train)!r}")
    return 0


def cmd_predict(args):
    model = LinearTwoHeadModel.load(args.model)
    windows = _load_series(args)
    data.write_predictions_csv(args.out, predict_windows(model, windows))
    return 0


def cmd_calibrate(args):
    bundles = _bundles_from_args(args)
    if not bundles:
        raise InputDomainError("no series to calibrate on")
    H = len(bundles[0].variances)
    spec = CoverageSpec(args.c, H, args.eps_gamma)
    prefix = build_profiles(np.array([b.variances for b in bundles]))
    if args.mode == "full":
        policy = calibrate_full(prefix[:, -1], spec)
    else:
        policy = calibrate_lagrange(prefix, spec, args.mode)
    _write_text(args.out_policy, policy.to_json() + "\n")
    return 0


def cmd_evaluate(args):
    with open(args.policy, encoding="utf-8") as fh:
        policy = policy_from_json(fh.read())
    bundles = _bundles_from_args(args)
    windows = _load_series(args)
    truth = {w.id: w.future for w in windows}
    missing = [b.id for b in bundles if truth.get(b.id) is None]
    if missing:
        raise InputDomainError(f"no realised future for series {missing[0]!r}")
    Y = np.array([truth[b.id] for b in bundles])
    means = np.array([b.means for b in bundles])
    if Y.shape != means.shape:
        raise InputDomainError(f"future shape {Y.shape} does not match predictions {means.shape}")
    H = Y.shape[1]
    prefix = build_profiles(np.array([b.variances for b in bundles]))
    rng = SeededRng(args.seed)
    if isinstance(policy, LagrangePolicy):
        dec = decide_lagrange_batch(policy, SelectionTable(prefix, policy.mode), rng)
    else:
        dec = decide_full_batch(policy, prefix[:, -1], rng, H)
    report = evaluation.make_report(policy.mode, policy.c, args.seed, dec, (Y - means) ** 2, args.eps_grid)
    _write_text(args.out_report, evaluation.format_reports_csv([report], args.eps_grid))
    return 0


def cmd_sweep(args):
    windows = _load_series(args)
    if any(w.future is None for w in windows):
        raise UsageError("sweep needs --t or --h so each series has a future")
    reports = evaluation.sweep_dataset(
        windows, args.strategies, args.grid, args.seeds, lag=args.lag, fit_method=args.method,
        beta=args.beta, epochs=args.epochs, learning_rate=args.lr,
    )
    evaluation.write_reports_csv(args.out, reports)
    long_path = args.out_long or os.path.splitext(args.out)[0] + "_long.csv"
    evaluation.write_long_csv(long_path, reports)
    print(f"wrote {len(reports)} rows to {args.out} and {long_path}")
    return 0


def cmd_oracle_check(args):
    bundles = data.read_predictions_csv(args.data)
    prefix = build_profiles(np.array([b.variances for b in bundles]))
    modes = ("full", "partial", "interval") if args.mode == "all" else (args.mode,)
    certs = oracle.certify(prefix, args.c, modes, max_enum=args.max_enum, tol=1e-9)
    ok = True
    for cert in certs:
        status = "PASS" if cert.passed else "FAIL"
        ok &= cert.passed
        print(f"mode={cert.mode} oracle_risk={cert.oracle_risk!r} policy_risk={cert.policy_risk!r} "
              f"dinkelbach={'PASS' if cert.dinkelbach else 'FAIL'} {status}")
    if len(certs) == 3:
        r = {cert.mode: cert.oracle_risk for cert in certs}
        nested = r["interval"] <= r["partial"] + 1e-12 and r["partial"] <= r["full"] + 1e-12
        ok &= nested
        print(f"nesting interval<=partial<=full {'PASS' if nested else 'FAIL'}")
    return 0 if ok else EXIT_CHECK_FAILED


# -- parser --------------------------------------------------------------------------


def _add_split_flags(p):
    p.add_argument("--t", type=_positive_int, help="past length (values after it are the future)")
    p.add_argument("--h", type=_positive_int, help="horizon (the last H values are the future)")


def _add_fit_flags(p):
    p.add_argument("--lag", type=_positive_int, default=10)
    p.add_argument("--method", choices=("two-stage", "beta-nll"), default="two-stage")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)


def _add_source(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="model JSON written by fit")
    g.add_argument("--predictions", help="predictions CSV (id,step,mean,variance)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="horizon-abstain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic heteroscedastic AR(1) dataset")
    p.add_argument("--n", type=_positive_int, default=2000)
    p.add_argument("--t", type=_positive_int, default=40)
    p.add_argument("--h", type=_positive_int, default=10)
    p.add_argument("--ar", type=float, default=0.7)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--amp", type=float, default=4.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="seeded 60/20/20 train/calib/test split of a series CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="fit the two-head linear forecaster")
    p.add_argument("--data", required=True)
    _add_split_flags(p)
    _add_fit_flags(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="write forecasts of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_split_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="calibrate an abstention policy at coverage c")
    _add_source(p)
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--c", type=_coverage, required=True)
    p.add_argument("--mode", choices=("full", "partial", "interval"), required=True)
    p.add_argument("--eps-gamma", type=float, default=None)
    p.add_argument("--out-policy", default="-")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="apply a policy and report selective risk and coverage")
    p.add_argument("--policy", required=True)
    _add_source(p)
    p.add_argument("--data", required=True, help="series CSV with realised futures")
    _add_split_flags(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--eps-grid", type=_float_list, default=list(evaluation.DEFAULT_EPS_GRID))
    p.add_argument("--out-report", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="split, fit, calibrate and evaluate over coverages and seeds")
    p.add_argument("--data", required=True)
    _add_split_flags(p)
    p.add_argument("--strategies", type=_strategy_list, default=["full", "partial", "interval"])
    p.add_argument("--grid", type=_coverage_list, default=list(evaluation.DEFAULT_GRID))
    p.add_argument("--seeds", type=_seed_list, default=[0])
    _add_fit_flags(p)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--out-long", default=None, help="long-format CSV path (default <out>_long.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="compare calibrated policies with brute-force optima")
    p.add_argument("--data", required=True, help="predictions CSV of a tiny instance")
    p.add_argument("--c", type=_coverage, required=True)
    p.add_argument("--mode", choices=("full", "partial", "interval", "all"), default="all")
    p.add_argument("--max-enum", type=_positive_int, default=oracle.MAX_ENUM)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    line = " ".join(str(message).split())
    print(f"error: {kind}: {line}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ParseError as exc:
        return _fail("parse", exc, EXIT_INPUT)
    except TrainingError as exc:
        return _fail("training", exc, EXIT_TRAINING)
    except (AbstainError, ValueError, OSError) as exc:
        return _fail("input", exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
