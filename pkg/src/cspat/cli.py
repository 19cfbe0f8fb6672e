"""Command line entry point: ``cspat run | certify | bench``.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .expander import expansion_constants
from .pipeline import ConfigError, SolverFailure, benchmark_complexity, load_config, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest = run(cfg)
    _emit(manifest.metrics)
    return EXIT_OK


def _cmd_certify(args) -> int:
    try:
        A = io.read_matrix(args.matrix)
    except FileNotFoundError as exc:
        raise ConfigError(f"matrix file not found: {args.matrix}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad matrix file: {exc}") from exc
    try:
        report = expansion_constants(A, args.smax)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    theta = [float(t) for t in report.theta]
    _emit({
        "m": A.m, "N": A.N, "d": A.d, "s_max": report.s_max,
        "theta": theta,
        # 1-based like the matrix file
        "witnesses": [[j + 1 for j in w] for w in report.witnesses],
        "recovery_certified_s": [s for s in range(1, report.s_max // 2 + 1)
                                 if theta[2 * s - 1] < 1 / 6],
    })
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        sweep = json.loads(Path(args.sweep).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"sweep file not found: {args.sweep}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sweep is not valid JSON: {exc}") from exc
    table = benchmark_complexity(sweep)
    for row in table["rows"]:
        _emit(row)
    _emit({k: v for k, v in table.items() if k != "rows"})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cspat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("certify", help="exact restricted expansion constants of a matrix")
    c.add_argument("matrix")
    c.add_argument("--smax", type=int, required=True)
    c.set_defaults(func=_cmd_certify)

    b = sub.add_parser("bench", help="time sinogram completion over a sweep of (N, m)")
    b.add_argument("sweep")
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cspat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"cspat: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
