"""Render an analysis bundle to the delimited report files.

report.csv has one row per (model, variant, subset) group with percents
rounded to one decimal; report.json carries the same bundle with raw,
full-precision values. Columns (fixed):

    model_id, variant, subset, count, v_object_pct, v_context_pct,
    accuracy_pct

subset is one of: overall, correct, wrong, large, small, other. The
accuracy column is filled on overall rows only.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import DomainError

CSV_COLUMNS = ("model_id", "variant", "subset", "count",
               "v_object_pct", "v_context_pct", "accuracy_pct")
_SUBSET_ORDER = ("overall", "correct", "wrong", "large", "small", "other")


def _fmt_fraction_pct(value) -> str:
    return "" if value is None else f"{100.0 * value:.1f}"


def _fmt_pct(value) -> str:
    return "" if value is None else f"{value:.1f}"


def _variant_order(bundle) -> list:
    configured = list(bundle.get("provenance", {}).get("variant_order", []))
    present: set = set()
    for model_doc in bundle.get("models", {}).values():
        present.update(model_doc)
    ordered = [t for t in configured if t in present]
    ordered += sorted(present - set(ordered))
    return ordered


def check_declines(bundle, tolerance: float = 1e-9) -> None:
    """Assert decline = original accuracy − group mean, as the metrics
    layer computed them, before anything is rendered."""
    for model_id, summary in bundle.get("summary", {}).items():
        orig = summary.get("orig_accuracy")
        for group in ("cc", "cp"):
            mean = summary.get(f"mean_{group}")
            decline = summary.get(f"decline_{group}")
            if mean is None or decline is None or orig is None:
                continue
            if abs((orig - mean) - decline) > tolerance:
                raise DomainError(
                    f"model {model_id!r}: decline_{group} {decline} is not "
                    f"orig − mean_{group} = {orig - mean}"
                )


def render_csv(bundle) -> str:
    check_declines(bundle)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    variant_order = _variant_order(bundle)
    for model_id in sorted(bundle.get("models", {})):
        model_doc = bundle["models"][model_id]
        for tag in variant_order:
            entry = model_doc.get(tag)
            if entry is None:
                continue
            volume = entry.get("volume", {})
            subsets = {
                "overall": volume.get("overall"),
                "correct": volume.get("correct"),
                "wrong": volume.get("wrong"),
                **{name: volume.get("strata", {}).get(name)
                   for name in ("large", "small", "other")},
            }
            for subset in _SUBSET_ORDER:
                stats = subsets.get(subset)
                if stats is None:
                    continue
                writer.writerow((
                    model_id,
                    tag,
                    subset,
                    stats["count"],
                    _fmt_fraction_pct(stats["v_object"]),
                    _fmt_fraction_pct(stats["v_context"]),
                    _fmt_pct(entry.get("accuracy_pct"))
                    if subset == "overall" else "",
                ))
    return buffer.getvalue()


def render_json(bundle) -> str:
    check_declines(bundle)
    return json.dumps(bundle, sort_keys=True, indent=2) + "\n"


def write_reports(bundle, report_dir) -> tuple[Path, Path]:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    csv_path = report_dir / "report.csv"
    json_path = report_dir / "report.json"
    csv_path.write_text(render_csv(bundle))
    json_path.write_text(render_json(bundle))
    return csv_path, json_path
