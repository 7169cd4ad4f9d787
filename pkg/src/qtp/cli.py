"""Command-line entry point: ``qtp run``, ``qtp validate``, ``qtp sweep`` and ``qtp defaults``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCENARIOS, default_config, dump_config, load_config, set_parameter
from .errors import NumericalError, QTPError, ValidationError
from .scenarios import emit_csv, run_scenario, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
OUTPUT_ENV = "QTP_OUTPUT_DIR"

log = logging.getLogger("qtp")


def _output_dir(arg):
    return Path(arg or os.environ.get(OUTPUT_ENV) or "qtp-output")


def _cmd_run(args):
    cfg = load_config(args.config)
    bundle = run_scenario(cfg, threads=args.threads, timing=args.timing)
    for path in emit_csv(bundle, _output_dir(args.out), stamp=args.timestamp):
        print(path)
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_config(args.config)
    print(f"ok: scenario={cfg.scenario} config_sha256={cfg.digest()}")
    return EXIT_OK


def _cmd_sweep(args):
    cfg = load_config(args.config)
    values = np.linspace(args.start, args.stop, args.steps)
    # validate the end points before spending time on the sweep
    for v in (values[0], values[-1]):
        set_parameter(cfg, args.param, float(v))
    bundle = run_sweep(cfg, args.param, values, threads=args.threads, timing=args.timing)
    for path in emit_csv(bundle, _output_dir(args.out), stamp=args.timestamp):
        print(path)
    return EXIT_OK


def _cmd_defaults(args):
    sys.stdout.write(dump_config(default_config(args.scenario)))
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="qtp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qtp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def outputs(p):
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./qtp-output)")
        p.add_argument("--threads", type=_positive_int, default=1, help="worker threads for sweep points")
        p.add_argument("--timing", action="store_true", help="add a runtime_seconds column to sweeps")
        p.add_argument("--timestamp", action="store_true", help="stamp the CSV comment line with UTC time")

    run = sub.add_parser("run", help="run the scenario of a configuration file")
    run.add_argument("config")
    outputs(run)
    run.set_defaults(func=_cmd_run)

    validate = sub.add_parser("validate", help="check a configuration file without running it")
    validate.add_argument("config")
    validate.set_defaults(func=_cmd_validate)

    sweep = sub.add_parser("sweep", help="sweep one parameter and tabulate Q1 and Q2")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True, help="parameter name, e.g. separation or physics.width")
    sweep.add_argument("--from", dest="start", type=float, required=True)
    sweep.add_argument("--to", dest="stop", type=float, required=True)
    sweep.add_argument("--steps", type=_positive_int, required=True)
    outputs(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    defaults = sub.add_parser("defaults", help="print the default configuration of a scenario")
    defaults.add_argument("scenario", choices=SCENARIOS)
    defaults.set_defaults(func=_cmd_defaults)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
