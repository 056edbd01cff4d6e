"""Command line front end: run experiments, validate configs, check oracles."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import load_experiment_config
from .errors import ConfigError, LatticeRegError
from .harness import emit_outputs, run_experiment
from .oracle import brute_solve, load_suite, write_default_suite
from .solver import solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3

ORACLE_RTOL = 1e-5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticereg",
        description="Variational regularisation with order-interval operator brackets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured rate experiment")
    run_p.add_argument("config", help="experiment config (TOML)")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--plot", action="store_true", help="also write plot.svg")
    run_p.add_argument("--threads", type=int, default=1, help="parallel row solves")

    val_p = sub.add_parser("validate", help="parse and validate a config, then exit")
    val_p.add_argument("config", help="experiment config (TOML)")

    orc_p = sub.add_parser("oracle", help="compare the solver against brute-force")
    orc_p.add_argument(
        "fixtures", help="directory of .problem records (created if missing)"
    )
    return parser


def _cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    result = run_experiment(cfg, threads=args.threads)
    paths = emit_outputs(result, args.out, plot=args.plot)
    for key in sorted(result.summary):
        print(f"{key} = {result.summary[key]}")
    for key in sorted(paths):
        print(f"wrote {paths[key]}")
    return EXIT_OK if result.summary["passed"] else EXIT_EXPERIMENT


def _cmd_validate(args) -> int:
    cfg = load_experiment_config(args.config)
    print(f"config ok: {cfg.name}")
    print(f"  operator = {cfg.operator.kind} (n={cfg.operator.n})")
    print(f"  fidelity = {cfg.fidelity.name}")
    print(f"  regulariser = {cfg.regulariser.name}")
    print(f"  alpha_rule = {cfg.alpha_rule}, deltas = {len(cfg.deltas)}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    directory = Path(args.fixtures)
    if not directory.exists() or not any(directory.glob("*.problem")):
        write_default_suite(directory)
        print(f"seeded default oracle suite in {directory}")
    suite = load_suite(directory)
    width = max(len(name) for name, _ in suite)
    failures = 0
    for name, problem in suite:
        reference = brute_solve(problem)
        report = solve(problem)
        scale = max(1.0, abs(reference.value))
        rel = abs(report.primal_value - reference.value) / scale
        status = "ok" if rel <= ORACLE_RTOL and report.converged else "FAIL"
        if status == "FAIL":
            failures += 1
        print(
            f"{name:<{width}}  oracle={reference.value: .10f}  "
            f"solver={report.primal_value: .10f}  rel={rel:.2e}  {status}"
        )
    if failures:
        print(f"{failures} of {len(suite)} instances disagree")
        return EXIT_EXPERIMENT
    print(f"all {len(suite)} instances agree to {ORACLE_RTOL:g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_oracle(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LatticeRegError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
