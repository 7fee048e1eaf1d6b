"""Command line: ``quenchstat {run,scaling,validate,version}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .eigensolver import LanczosConvergenceError
from .quench import DegenerateGapError, SumRuleError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "QUENCHSTAT_THREADS"

log = logging.getLogger("quenchstat")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the sampling seed")
    common.add_argument("--output-dir", help="override the output directory (must exist)")
    common.add_argument("--threads", type=int, help=f"cap internal parallelism (default ${THREADS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="quenchstat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("run", "run a quench experiment and export tables"),
        ("scaling", "run the configured finite-size scaling probes"),
        ("validate", "parse and validate a config file without computing"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", help="path to the config file")
    sub.add_parser("version", help="print the package version")
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "version":
        print(f"quenchstat {__version__}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    from threadpoolctl import threadpool_info, threadpool_limits

    from .harness import export_tables, run, run_scaling

    try:
        try:
            config = load_config(args.config)
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from err
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        config = config.replace(**overrides) if overrides else config
        if not 0 <= config.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", field="run.seed")
        threads = _threads(args)
        if args.command == "validate":
            print(f"{args.config}: ok")
            return EXIT_OK
        out = Path(config.output_dir)
        if not out.is_dir():
            print(f"quenchstat: output directory {out} does not exist", file=sys.stderr)
            return EXIT_IO
        # only ever lower BLAS pools; raising OpenBLAS past its start-up count can crash LAPACK
        blas_cap = min([threads] + [pool["num_threads"] for pool in threadpool_info()])
        with threadpool_limits(limits=blas_cap):
            if args.command == "run":
                bundle = run(config, threads)
            else:
                if not config.scaling_probes:
                    raise ConfigError("no probes configured", field="scaling.probes")
                bundle = run_scaling(config)
        files = export_tables(bundle, out)
        print(f"wrote {len(files)} files to {out}")
        return EXIT_OK
    except ConfigError as err:
        print(f"quenchstat: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (LanczosConvergenceError, SumRuleError, DegenerateGapError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"quenchstat: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"quenchstat: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
