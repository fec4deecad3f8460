"""Command-line entry point: one subcommand per pipeline stage plus run-all."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import BiasLensError, ConfigError, MissingStageInput, RunLocked
from .pipeline import STAGES, Run, RunOptions, run_all, run_stage

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2
EXIT_CONFIG = 3
EXIT_LOCKED = 4


def _csv_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _int_list(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in _csv_list(value))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="pipeline YAML file, or builtin:demo for the bundled synthetic corpus")
    common.add_argument("--out", help="run directory (overrides output_dir in the config)")
    common.add_argument("--models", type=_csv_list, help="comma-separated model ids to run")
    common.add_argument("--conflict", help="only datasets for this conflict")
    common.add_argument("--source", help="only datasets for this outlet")
    common.add_argument("--offline", action="store_true", help="use mock backends and recorded HTTP only")
    common.add_argument("--strict", action="store_true", help="fail on the first malformed corpus record")
    common.add_argument("--record-timing", action="store_true",
                        help="store stage timings in run.json (makes runs non-identical)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="biaslens", description="News-outlet political bias pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run-all"):
        p = sub.add_parser(name, parents=[common])
        if name in ("ngram", "run-all"):
            p.add_argument("--n", type=_int_list, help="n-gram sizes, e.g. 2,3")
            p.add_argument("--top", type=int, help="rows per n-gram table")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, output_dir=args.out)
        options = RunOptions(
            offline=args.offline,
            strict=args.strict,
            models=args.models,
            conflict=args.conflict,
            source=args.source,
            ngram_n=getattr(args, "n", None),
            ngram_top=getattr(args, "top", None),
            record_timing=args.record_timing,
        )
        run = Run(config, options)
        if args.command == "run-all":
            run_all(run)
        else:
            run_stage(run, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingStageInput as exc:
        print(f"missing stage input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except RunLocked as exc:
        print(f"run locked: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    except BiasLensError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: ok ({config.output_dir})", file=sys.stderr)
    return EXIT_OK
