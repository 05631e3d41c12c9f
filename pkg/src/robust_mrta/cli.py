"""Command-line front end.

Subcommands::

    robust-mrta collect --scenario exp1 --out data/exp1
    robust-mrta run     --scenario exp1 --mode robust --dataset data/exp1 --out runs/exp1-robust
    robust-mrta compare --scenario exp1 --out runs/exp1

``--scenario`` takes a path or the name of a bundled scenario (exp1, exp2,
undisturbed). Exit codes: 0 success, 1 invalid input or scenario, 2 solver or
numerical failure, 3 file I/O error. Set ROBUST_MRTA_LOG to DEBUG, INFO,
WARNING or ERROR to control log verbosity (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import scenario as scenario_io
from .errors import FactorizationError, MrtaError, SolverError
from .experiments import run_both, verdict_for, write_comparison
from .gp import load_dataset, save_dataset
from .simulator import collect_training_data, fit_disturbances, run, write_log

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
LOG_ENV = "ROBUST_MRTA_LOG"

log = logging.getLogger("robust_mrta")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _resolve(path: str) -> str:
    if os.path.exists(path):
        return path
    if os.sep not in path and not path.endswith((".yaml", ".yml")):
        try:
            return scenario_io.bundled(path)
        except FileNotFoundError:
            pass
    raise _Fail(EXIT_IO, f"cannot read scenario file '{path}'")


def _load(args):
    path = _resolve(args.scenario)
    try:
        sc = scenario_io.load(path)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read scenario file '{path}': {exc.strerror}") from exc
    return scenario_io.with_overrides(sc, steps=args.steps, seed=args.seed, d_max=args.dmax,
                                      k_c=args.kc, beta1=args.beta1)


def dataset_path(directory: str, robot: int) -> str:
    return os.path.join(directory, f"robot{robot}.csv")


def _read_datasets(directory, n_robots):
    paths = [dataset_path(directory, i) for i in range(n_robots)]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise _Fail(EXIT_IO, f"dataset file '{missing[0]}' not found")
    try:
        return [load_dataset(p) for p in paths]
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read dataset: {exc}") from exc


def cmd_collect(args) -> int:
    sc = _load(args)
    datasets = collect_training_data(sc)
    try:
        os.makedirs(args.out, exist_ok=True)
        for i, ds in enumerate(datasets):
            save_dataset(dataset_path(args.out, i), ds)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write datasets to '{args.out}': {exc}") from exc
    for r, ds in zip(sc.robots, datasets):
        print(f"{r.name}: {len(ds)} samples")
    return EXIT_OK


def _write(logs, sc, out):
    try:
        summaries = {m: write_log(lg, os.path.join(out, m) if len(logs) > 1 else out, sc.tracked_robot)
                     for m, lg in logs.items()}
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write results to '{out}': {exc}") from exc
    return summaries


def _plots(logs, sc, out, enabled):
    if not enabled:
        return
    from .plotting import render
    try:
        for path in render(list(logs), out, sc.tracked_robot):
            log.info("wrote %s", path)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write figures to '{out}': {exc}") from exc


def cmd_run(args) -> int:
    sc = _load(args)
    mode = args.mode
    fitted = None
    if mode == "robust":
        if not args.dataset:
            raise _Fail(EXIT_VALIDATION, "robust mode needs --dataset (see the collect subcommand)")
        fitted = fit_disturbances(sc, _read_datasets(args.dataset, len(sc.robots)))
    lg = run(sc, mode, fitted)
    summary = _write({mode: lg}, sc, args.out)[mode]
    _plots([lg], sc, args.out, not args.no_plots)
    for key in ("steps", "initial_energy", "final_energy", "final_energy_ratio",
                "reallocation_events", "tracked_final_assigned_specialization"):
        print(f"{key} = {summary[key]}")
    print(f"final_specializations = {summary['final_specializations']}")
    if lg.failure:
        print(f"solver failure: {lg.failure}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args)
    datasets = _read_datasets(args.dataset, len(sc.robots)) if args.dataset else None
    logs = run_both(sc, datasets)
    _write(logs, sc, args.out)
    try:
        write_comparison(logs, sc.tracked_robot, os.path.join(args.out, "comparison.csv"))
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write comparison to '{args.out}': {exc}") from exc
    _plots(list(logs.values()), sc, args.out, not args.no_plots)
    failures = [f"{m}: {lg.failure}" for m, lg in logs.items() if lg.failure]
    if failures:
        print("solver failure: " + "; ".join(failures), file=sys.stderr)
        return EXIT_SOLVER
    v = verdict_for(sc, logs)
    print(v.line())
    with open(os.path.join(args.out, "verdict.txt"), "w") as fh:
        fh.write(v.line() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="robust-mrta",
        description="Adaptive multi-robot task allocation with learned disturbance models.",
        epilog=f"Exit codes: 0 ok, 1 invalid input, 2 solver failure, 3 I/O error. "
               f"Log verbosity: {LOG_ENV}=DEBUG|INFO|WARNING|ERROR.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--scenario", required=True,
                        help="scenario YAML path or bundled name (exp1, exp2, undisturbed)")
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--steps", type=int, help="override the number of control steps")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--dmax", type=float, help="override the disturbance cap d_max [state units/s]")
        sp.add_argument("--kc", type=float, help="override the confidence multiplier k_c")
        sp.add_argument("--beta1", type=float, help="override the specialization gain beta1")

    c = sub.add_parser("collect", help="sweep the arena and write one dataset file per robot")
    common(c, "output directory for robot<i>.csv dataset files")
    c.set_defaults(func=cmd_collect)

    r = sub.add_parser("run", help="run one mode and write CSV logs, summary and figures")
    common(r, "output directory")
    r.add_argument("--mode", choices=["nominal", "robust"], default="robust",
                   help="nominal = baseline CBF and update law, robust = learned hulls (default)")
    r.add_argument("--dataset", help="directory written by 'collect' (needed for robust mode)")
    r.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare", help="run both modes concurrently and print a verdict")
    common(m, "output directory")
    m.add_argument("--dataset", help="directory written by 'collect'; collected on the fly if omitted")
    m.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; report those as invalid input
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    if args.steps is not None and args.steps < 1:
        print("error: --steps must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SolverError, FactorizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MrtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
