"""Command line entry point: ``swarmsim {run,validate,sweep,convergence}``.

Exit codes: 0 on success, 1 for configuration errors, 2 for a failed step
(or a failed determinism check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, build_problem, initial_checks, initial_fields, load_config, validate_config
from .solver import initial_state
from .studies import convergence_study, execute, parse_sweep, reports_csv, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_STEP = 0, 1, 2


def _load(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.mode:
        cfg = replace(cfg, solver=replace(cfg.solver, mode=args.mode))
    csv_path = args.csv or cfg.output.csv
    result, error, reports = execute(cfg, csv_path=csv_path, snapshot_every=args.dump_every)
    if error is not None:
        print(f"step failure: {error}", file=sys.stderr)
        return EXIT_STEP
    if args.seed_check:
        _, error2, again = execute(cfg, csv_path=None, snapshot_every=0)
        if error2 is not None or reports_csv(again) != reports_csv(reports):
            print("determinism check failed: repeated run produced different output", file=sys.stderr)
            return EXIT_STEP
        print("determinism check passed")
    last = reports[-1]
    print(f"finished t={last.t:g}  rho_L1={last.rho_L1:.6g}  Q_L1={last.Q_L1:.6g}  "
          f"biomass_residual={last.biomass_residual:.3e}  sup_l2_ratio={result.sup_l2_ratio:.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config, validate=False)
    problems = validate_config(cfg)
    if not any(p.severity == "error" for p in problems):
        problem = build_problem(cfg)
        rho0, Q0, M0 = initial_fields(cfg, problem)
        problems += initial_checks(cfg, problem, initial_state(problem, rho0, Q0, M0))
    for p in problems:
        prefix = "warning: " if p.severity == "warning" else ""
        print(f"{prefix}{p}")
    return EXIT_CONFIG if any(p.severity == "error" for p in problems) else EXIT_OK


def cmd_sweep(args) -> int:
    path = Path(args.sweep)
    try:
        spec = parse_sweep(path.read_text(encoding="utf-8"), base_dir=path.parent)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    if args.workers:
        spec.workers = args.workers
    manifest = run_sweep(spec)
    print(f"wrote {manifest}")
    failed = [ln for ln in manifest.read_text().splitlines()[1:] if ",failed," in ln]
    return EXIT_STEP if failed else EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _load(args.config)
    table = convergence_study(cfg, args.levels)
    print(table.format())
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarmsim", description="Age-structured swarm colony simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configuration and write the report CSV")
    p.add_argument("config")
    p.add_argument("--mode", choices=("direct", "picard"))
    p.add_argument("--dump-every", type=int, default=None, help="snapshot stride in steps (0 disables)")
    p.add_argument("--csv", help="report CSV path (default: output.csv from the config)")
    p.add_argument("--seed-check", action="store_true", help="run twice and require identical reports")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="list every violated hypothesis")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="run the Cartesian product described by a sweep file")
    p.add_argument("sweep")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", help="refinement study with observed orders")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_convergence)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
