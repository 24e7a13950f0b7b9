"""Command-line interface.

Subcommands:
  run         run the cross-validation experiment on a CSV and emit reports
  fixture     write a built-in demonstration dataset to CSV
  check-loss  exhaustive monotonicity check of a loss spec
  bound       evaluate the transfer bound f(theta) and its minimizer

Exit codes: 0 success, 2 dataset discarded (no sensitive attribute or
trivial), 3 configuration error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .analysis import make_figure1_fixture, make_parity_fixture
from .core import FairsplitError, save_dataset_csv
from .losses import find_monotonicity_counterexample, parse_loss_spec
from .pipeline import (
    ALL_BASELINES,
    ConfigError,
    DatasetDiscardedError,
    ExperimentConfig,
    emit_report,
    run_experiment,
)
from .transfer import BoundInputs, DEFAULT_THETA_GRID, TransferConfig, f_bound, theta_star

EXIT_OK = 0
EXIT_DISCARDED = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; we use 3
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fairsplit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fairsplit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the cross-validation experiment")
    run.add_argument("--input", required=True, help="input CSV (header row)")
    run.add_argument("--label", required=True, help="label column name")
    run.add_argument("--sensitive", default=None, help="sensitive column (default: auto-select)")
    run.add_argument("--mode", required=True, choices=["binary", "regression"])
    run.add_argument("--loss", default="balanced", help="loss spec, e.g. l1, np:lambda=0.5")
    run.add_argument("--folds", type=int, default=5, help="outer folds (default 5)")
    run.add_argument("--inner-folds", type=int, default=5, help="inner folds (default 5)")
    run.add_argument(
        "--theta-grid",
        default="default",
        help="'default' or comma-separated values in [0,1]",
    )
    run.add_argument("--seed", type=int, default=0)
    run.add_argument(
        "--baselines",
        default=",".join(ALL_BASELINES),
        help="comma-separated subset of blind,coupled,decoupled,decoupled_transfer",
    )
    run.add_argument("--out", required=True, help="output directory for report.json / summary.csv")

    fixture = sub.add_parser("fixture", help="write a demonstration dataset to CSV")
    fixture.add_argument("--name", required=True, choices=["parity", "figure1"])
    fixture.add_argument("--out", required=True)
    fixture.add_argument("--d", type=int, default=2, help="parity: dimension (default 2)")
    fixture.add_argument(
        "--target", default="regression", choices=["regression", "separator"], help="parity target"
    )
    fixture.add_argument("--n-major", type=int, default=200, help="figure1: majority size")
    fixture.add_argument("--n-minor", type=int, default=20, help="figure1: minority size")
    fixture.add_argument("--seed", type=int, default=0)

    check = sub.add_parser("check-loss", help="search for a monotonicity counterexample")
    check.add_argument("--loss", required=True)
    check.add_argument("--max-n", type=int, default=8)
    check.add_argument("--groups", type=int, default=2)
    check.add_argument("--budget", type=int, default=20000)
    check.add_argument("--seed", type=int, default=0)

    bound = sub.add_parser("bound", help="evaluate the transfer bound and theta*")
    bound.add_argument("--nk", type=int, required=True, help="in-group sample count")
    bound.add_argument("--nmk", type=int, required=True, help="out-group sample count")
    bound.add_argument("--delta-cap", type=float, required=True, help="cross-group gap bound Delta")
    bound.add_argument("--confidence", type=float, required=True, help="failure probability delta")
    bound.add_argument("--class-size", type=int, required=True, help="|C|")
    return parser


def _parse_theta_grid(text: str) -> tuple:
    if text.strip() == "default":
        return DEFAULT_THETA_GRID
    try:
        return tuple(sorted({float(v) for v in text.split(",")}))
    except ValueError as exc:
        raise ConfigError(f"bad theta grid {text!r}: {exc}") from exc


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        input_path=args.input,
        label_column=args.label,
        sensitive_column=args.sensitive,
        mode=args.mode,
        loss=args.loss,
        outer_folds=args.folds,
        transfer=TransferConfig(theta_grid=_parse_theta_grid(args.theta_grid), inner_folds=args.inner_folds),
        seed=args.seed,
        baselines=tuple(b.strip() for b in args.baselines.split(",") if b.strip()),
        output_path=args.out,
    )
    report = run_experiment(cfg)
    paths = emit_report(report, args.out)
    for p in paths:
        print(p)
    if report.dataset["discarded"]:
        print(f"dataset discarded: {report.dataset['discard_reason']}", file=sys.stderr)
        return EXIT_DISCARDED
    return EXIT_OK


def _cmd_fixture(args) -> int:
    if args.name == "parity":
        fixture = make_parity_fixture(args.d, target=args.target, seed=args.seed)
    else:
        fixture = make_figure1_fixture(args.n_major, args.n_minor, seed=args.seed)
    save_dataset_csv(fixture.dataset, args.out)
    print(f"{args.out}: {fixture.description} ({fixture.dataset.n} rows)")
    return EXIT_OK


def _cmd_check_loss(args) -> int:
    spec = parse_loss_spec(args.loss, K=args.groups)
    witness = find_monotonicity_counterexample(
        spec, max_n=args.max_n, budget=args.budget, seed=args.seed
    )
    if witness is None:
        scope = f"n <= {args.max_n}" if args.max_n <= 16 else f"{args.budget} random trials"
        print(f"{spec.spec_id}: no counterexample found ({scope}, K={args.groups})")
    else:
        inst, i, j = witness
        print(f"{spec.spec_id}: NOT monotonic; swapping rows {i} and {j} decreases the loss on:")
        for r in range(inst.n):
            print(f"  row {r}: group={inst.groups[r]} y={inst.labels[r]} z={inst.classifications[r]}")
    return EXIT_OK


def _cmd_bound(args) -> int:
    inputs = BoundInputs(
        n_k=args.nk,
        n_minus_k=args.nmk,
        delta_cap=args.delta_cap,
        confidence=args.confidence,
        class_size=args.class_size,
    )
    result = theta_star(inputs)
    print(f"f(0)      = {f_bound(0.0, inputs):.9f}")
    print(f"f(1)      = {f_bound(1.0, inputs):.9f}")
    print(f"theta*    = {result.theta:.9f}  [{result.branch}]")
    print(f"f(theta*) = {result.f_value:.9f}")
    if result.closed_forms:
        for name, value in sorted(result.closed_forms.items()):
            tag = "agrees" if result.closed_form_agrees[name] else "DISAGREES with the numerical minimum"
            print(f"closed-form candidate {name}: {value!r} ({tag})")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "fixture":
            return _cmd_fixture(args)
        if args.command == "check-loss":
            return _cmd_check_loss(args)
        if args.command == "bound":
            return _cmd_bound(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetDiscardedError as exc:
        print(f"dataset discarded: {exc}", file=sys.stderr)
        return EXIT_DISCARDED
    except FairsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
