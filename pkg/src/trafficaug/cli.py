"""Command-line entry points.

Subcommands: ingest, stats, experiment, synth-demo, eval.  Every command
reads a JSON run config (--config); --seed and --out override the scalar
fields.  Exit codes: 0 success, 2 configuration error, 3 I/O or file-format
error, 4 numeric failure during training, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import (
    ConfigError,
    DatasetFormatError,
    DivergenceError,
    IngestError,
    NonFiniteGradientError,
    StageError,
)
from .experiment import load_config, run_eval, run_experiment, run_ingest, run_synth_demo
from .flows import class_stats, load_flows

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the config output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficaug",
        description="flow ingestion, minority-class augmentation, and classifier comparison")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="group a packet CSV into a flow dataset file")
    _add_common(p)

    p = sub.add_parser("stats", help="print per-class flow counts and shares")
    _add_common(p)

    p = sub.add_parser("experiment", help="run the actual/sampled/augmented comparison")
    _add_common(p)

    p = sub.add_parser("synth-demo", help="print synthetic flows for one class")
    _add_common(p)
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--count", type=int, required=True)

    p = sub.add_parser("eval", help="re-evaluate a saved model on the test split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="path to a saved model file")
    p.add_argument("--variant", default="actual", help="variant tag for the report")
    return parser


def _dispatch(args) -> int:
    config = load_config(args.config, seed=args.seed, out_dir=args.out)
    if args.command == "ingest":
        table = run_ingest(config)
        print(f"wrote {config.dataset}")
        print(table)
    elif args.command == "stats":
        print(class_stats(load_flows(config.dataset)).format_table())
    elif args.command == "experiment":
        result = run_experiment(config)
        print(result["summary"])
        for name, path in sorted(result["artifacts"].items()):
            print(f"{name}: {path}")
    elif args.command == "synth-demo":
        for obj in run_synth_demo(config, args.class_name, args.count):
            print(json.dumps(obj, indent=2))
    elif args.command == "eval":
        print(json.dumps(run_eval(config, args.checkpoint, variant=args.variant), indent=2))
    return 0


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, IngestError, DatasetFormatError)):
        return EXIT_IO
    if isinstance(exc, (DivergenceError, NonFiniteGradientError, FloatingPointError)):
        return EXIT_NUMERIC
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - boundary: map everything to exit codes
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
