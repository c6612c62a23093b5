"""Command-line front end: full runs, stock sweeps, bound queries, self test.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    dump_weight_trajectories,
    example_preset,
    parse_config_file,
    run_experiment,
    run_selftest,
    write_results_csv,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppicsim",
        description=(
            "Synchronous CDMA uplink Monte-Carlo simulator with matched-filter "
            "and adaptive parallel interference cancelation detectors."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run an experiment described by a config file")
    run_parser.add_argument("--config", required=True, help="key = value config file")
    run_parser.add_argument("--out", required=True, help="output CSV path")
    run_parser.add_argument("--workers", type=int, default=1, help="parallel cell workers")
    run_parser.add_argument(
        "--dump-weights",
        metavar="DIR",
        default=None,
        help="also dump per-cell weight trajectories (first trial, final stage)",
    )

    sweep_parser = sub.add_parser("sweep", help="run a stock example sweep")
    sweep_parser.add_argument("--example", type=int, choices=(1, 2, 3), required=True)
    sweep_parser.add_argument("--out", default=None, help="output CSV path")
    sweep_parser.add_argument("--trials", type=int, default=None, help="override trials per cell")
    sweep_parser.add_argument("--seed", type=int, default=None, help="override experiment seed")
    sweep_parser.add_argument("--workers", type=int, default=1, help="parallel cell workers")

    bound_parser = sub.add_parser("bound", help="print the stable step-size bound for a load")
    bound_parser.add_argument("--users", type=int, required=True)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _print_cell_progress(done: int, total: int, records) -> None:
    summary = ", ".join(
        f"{rec.detector}[{rec.stage}]={rec.ber:.3g}"
        for rec in records
        if rec.detector == "conventional" or rec.stage == max(r.stage for r in records)
    )
    first = records[0]
    print(f"[{done}/{total}] users={first.users} gain={first.gain}: {summary}", flush=True)


def _cmd_run(args) -> int:
    config = parse_config_file(args.config)
    records = run_experiment(config, workers=args.workers, progress=_print_cell_progress)
    write_results_csv(records, args.out, config)
    print(f"wrote {len(records)} records to {args.out} (+ {args.out}.meta.json)")
    if args.dump_weights:
        paths = dump_weight_trajectories(config, args.dump_weights)
        print(f"dumped {len(paths)} weight trajectories to {args.dump_weights}")
    return 0


def _cmd_sweep(args) -> int:
    config = example_preset(args.example, trials=args.trials, seed=args.seed)
    out = args.out if args.out is not None else f"example{args.example}_results.csv"
    records = run_experiment(config, workers=args.workers, progress=_print_cell_progress)
    write_results_csv(records, out, config)
    print(f"wrote {len(records)} records to {out} (+ {out}.meta.json)")
    return 0


def _cmd_bound(args) -> int:
    from .detectors import step_size_bound

    if args.users < 1:
        raise ConfigError(f"users must be >= 1 (got {args.users})")
    print(repr(step_size_bound(args.users)))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "bound":
            return _cmd_bound(args)
        if args.command == "selftest":
            return 0 if run_selftest() else 2
        raise AssertionError(f"unhandled command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
