"""Command-line interface: ``ctxrunner infer | attribute | run``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .attribution import run_attribution
from .config import make_config, read_config_file
from .errors import ConfigError, RunnerError
from .inference import run_inference


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags win")
    common.add_argument("--manifest", help="dataset manifest JSONL")
    common.add_argument("--variants", help="variant image directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", help="architecture name")
    common.add_argument("--weights", help="weights tag ('none' = random)")
    common.add_argument("--checkpoint", help="local state-dict file")
    common.add_argument("--builder",
                        help="module:function returning a custom model")
    common.add_argument("--method", help="attribution method")
    common.add_argument("--layer", help="target layer name")
    common.add_argument("--batch-size", type=int, dest="batch_size")
    common.add_argument("--device", help="torch device (default cpu)")
    common.add_argument("--model-id", dest="model_id",
                        help="model_id recorded in output rows")
    common.add_argument("--superclass-map", dest="superclass_map",
                        help="JSON mapping: model class -> dataset class")
    common.add_argument("--shard-index", type=int, dest="shard_index")
    common.add_argument("--shards", type=int)

    parser = argparse.ArgumentParser(
        prog="ctxrunner",
        description="Run classifiers and CAM attribution over variant "
                    "directories, emitting predictions JSONL and map files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("infer", parents=[common],
                   help="classify every (sample, variant)")
    sub.add_parser("attribute", parents=[common],
                   help="write one attribution map per (sample, variant)")
    sub.add_parser("run", parents=[common],
                   help="inference then attribution")
    return parser


def _config_from_args(args: argparse.Namespace):
    file_values = read_config_file(args.config) if args.config else None
    flag_values = {
        key: getattr(args, key)
        for key in (
            "manifest", "variants", "out", "model", "weights", "checkpoint",
            "builder", "method", "layer", "batch_size", "device", "model_id",
            "superclass_map", "shard_index", "shards",
        )
    }
    return make_config(file_values, flag_values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command in ("infer", "run"):
            summary = run_inference(config)
            print(
                f"wrote {summary['rows']} predictions for model "
                f"{summary['model_id']} to {config.predictions_path()}"
            )
        if args.command in ("attribute", "run"):
            summary = run_attribution(config)
            print(
                f"wrote {summary['maps_written']} maps "
                f"({len(summary['errors'])} errors) under {config.maps_dir()}"
            )
            if summary["errors"]:
                first = summary["errors"][0]
                print(f"first error: {first['error']}", file=sys.stderr)
                return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RunnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
