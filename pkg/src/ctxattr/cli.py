"""Command-line entry point.

Commands: validate, synthesize, attribute, analyze, report, run (all
stages), fixture (write the built-in demo dataset). Exit codes: 0 on
success, 2 on validation/configuration failure, 3 on a stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attribution import METHOD_KINDS, MethodSpec
from .errors import CtxAttrError, ManifestError, ParamError, StageError
from .fixtures import build_fixture
from .manifest import validate_manifest
from .pipeline import ALL_STAGES, RunConfig, parse_variant_tag, run_pipeline

_COMMAND_STAGES = {
    "synthesize": ("synthesize",),
    "attribute": ("predict", "attribute"),
    "analyze": ("analyze",),
    "report": ("report",),
    "run": ALL_STAGES,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxattr",
        description=(
            "Synthesize context variants of masked images, run a classifier "
            "over them, and report how much attribution mass falls on the "
            "object versus its context."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="dataset manifest (JSONL)")
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument("--seed", type=int, help="global random seed (default 2024)")
    common.add_argument("--out", help="output directory for run artifacts")
    common.add_argument(
        "--variants",
        help="comma-separated variant tags (e.g. original,only_fg,fog_s3); "
        "default: the full standard set",
    )
    common.add_argument("--severity", type=int,
                        help="corruption severity 1-5 for bare corruption tags "
                        "(default 3)")
    common.add_argument("--method", choices=METHOD_KINDS,
                        help="attribution method (default gradcam)")
    common.add_argument("--target-layer", type=int,
                        help="layer index whose activations CAM methods explain "
                        "(default: last spatial layer)")
    common.add_argument("--guided-reduction", choices=("max", "mean"),
                        help="channel reduction for guided backprop (default max)")
    common.add_argument("--context-threshold", type=float,
                        help="keep samples whose context fraction exceeds this "
                        "(default 0.30)")
    common.add_argument("--network", help="classifier file for builtin inference")
    common.add_argument("--external-preds",
                        help="predictions JSONL produced outside this run")
    common.add_argument("--external-maps",
                        help="directory of ATTR maps produced outside this run")
    common.add_argument("--jobs", type=int, help="worker threads (default 1)")
    common.add_argument("--model-id", help="model identifier recorded in reports")

    sub.add_parser("validate", parents=[common],
                   help="check a manifest and print per-record diagnostics")
    sub.add_parser("synthesize", parents=[common],
                   help="write variant images for every kept sample")
    sub.add_parser("attribute", parents=[common],
                   help="run the classifier and write attribution maps "
                   "(includes the predict stage)")
    sub.add_parser("analyze", parents=[common],
                   help="compute accuracy and volume statistics from "
                   "predictions and maps")
    sub.add_parser("report", parents=[common],
                   help="render report.csv, report.json, and figures from "
                   "a prior analyze")
    sub.add_parser("run", parents=[common], help="all stages end to end")

    fixture = sub.add_parser("fixture",
                             help="write the 16-sample demo dataset and "
                             "classifier")
    fixture.add_argument("--out", required=True, help="directory to create")
    fixture.add_argument("--seed", type=int, default=2024)
    return parser


def _read_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParamError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParamError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParamError(f"config file {path} must hold a JSON object")
    return doc


def _pick(args_value, file_doc: dict, key: str, default):
    if args_value is not None:
        return args_value
    if key in file_doc and file_doc[key] is not None:
        return file_doc[key]
    return default


def make_config(args) -> RunConfig:
    """Merge --config file values with command-line flags (flags win)."""
    doc = _read_config_file(args.config) if args.config else {}

    manifest = _pick(args.manifest, doc, "manifest", None)
    if manifest is None and args.command != "report":
        raise ParamError("a manifest is required (--manifest or config file)")
    out_dir = _pick(args.out, doc, "out", None)
    if out_dir is None:
        raise ParamError("an output directory is required (--out or config file)")

    severity = int(_pick(args.severity, doc, "severity", 3))
    variants_value = _pick(args.variants, doc, "variants", None)
    if isinstance(variants_value, str):
        tags = [t.strip() for t in variants_value.split(",") if t.strip()]
    else:
        tags = list(variants_value) if variants_value else []
    variants = tuple(parse_variant_tag(tag, severity) for tag in tags)

    method_doc = doc.get("method", {})
    if isinstance(method_doc, str):
        method_doc = {"kind": method_doc}
    method = MethodSpec(
        kind=_pick(args.method, method_doc, "kind", "gradcam"),
        target_layer=_pick(args.target_layer, method_doc, "target_layer", None),
        guided_reduction=_pick(args.guided_reduction, method_doc,
                               "guided_reduction", "max"),
    )

    return RunConfig(
        manifest=str(manifest),
        out_dir=str(out_dir),
        seed=int(_pick(args.seed, doc, "seed", 2024)),
        variants=variants,
        network=_pick(args.network, doc, "network", None),
        external_preds=_pick(args.external_preds, doc, "external_preds", None),
        external_maps=_pick(args.external_maps, doc, "external_maps", None),
        method=method,
        context_threshold=float(
            _pick(args.context_threshold, doc, "context_threshold", 0.30)
        ),
        severity=severity,
        jobs=int(_pick(args.jobs, doc, "jobs", 1)),
        model_id=_pick(args.model_id, doc, "model_id", None),
    )


def _cmd_validate(args) -> int:
    if args.manifest is None and args.config:
        args.manifest = _read_config_file(args.config).get("manifest")
    if args.manifest is None:
        raise ParamError("a manifest is required (--manifest or config file)")
    records, diagnostics = validate_manifest(args.manifest)
    if diagnostics:
        for line in diagnostics:
            print(line, file=sys.stderr)
        print(f"{len(diagnostics)} problem(s) in {args.manifest}", file=sys.stderr)
        return 2
    print(f"{len(records)} record(s) OK in {args.manifest}")
    return 0


def _cmd_fixture(args) -> int:
    manifest = build_fixture(args.out, seed=args.seed)
    print(f"fixture written; manifest at {manifest}")
    print(f"classifier at {Path(args.out) / 'network.json'}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fixture":
            return _cmd_fixture(args)
        if args.command == "validate":
            return _cmd_validate(args)
        config = make_config(args)
        bundle = run_pipeline(config, stages=_COMMAND_STAGES[args.command])
        out = Path(config.out_dir)
        print(f"{args.command} finished; artifacts under {out}")
        if bundle:
            for model_id, summary in sorted(bundle.get("summary", {}).items()):
                parts = [f"model {model_id}"]
                if summary.get("orig_accuracy") is not None:
                    parts.append(f"original accuracy {summary['orig_accuracy']:.1f}%")
                for group in ("cc", "cp"):
                    decline = summary.get(f"decline_{group}")
                    if decline is not None:
                        parts.append(f"decline_{group} {decline:.1f}")
                print("; ".join(parts))
            if (out / "report" / "report.csv").is_file():
                print(f"reports at {out / 'report'}")
        return 0
    except ManifestError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ParamError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(exc, file=sys.stderr)
        return 2 if exc.stage == "validate" else 3
    except CtxAttrError as exc:
        print(exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
