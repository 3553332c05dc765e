"""Bar-chart renderings of an analysis bundle, written as PNG files
alongside the delimited reports.

Three charts per model: accuracy per variant, mean context volume per
variant, and the correct-vs-wrong context-volume split.
"""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _safe_name(model_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", model_id)


def _variant_order(bundle, model_doc) -> list:
    configured = list(bundle.get("provenance", {}).get("variant_order", []))
    ordered = [t for t in configured if t in model_doc]
    ordered += sorted(set(model_doc) - set(ordered))
    return ordered


def _bar_chart(path: Path, labels, values, title: str, ylabel: str,
               series_labels=None) -> None:
    fig, ax = plt.subplots(figsize=(max(6.0, 0.7 * len(labels)), 4.0))
    x = range(len(labels))
    if series_labels is None:
        ax.bar(x, values, color="#4878cf")
    else:
        width = 0.8 / len(values)
        for i, (series, name) in enumerate(zip(values, series_labels)):
            offset = (i - (len(values) - 1) / 2.0) * width
            ax.bar([xi + offset for xi in x], series, width=width, label=name)
        ax.legend()
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render_figures(bundle, fig_dir) -> list[Path]:
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for model_id in sorted(bundle.get("models", {})):
        model_doc = bundle["models"][model_id]
        tags = _variant_order(bundle, model_doc)
        safe = _safe_name(model_id)

        accuracy = [model_doc[t].get("accuracy_pct") or 0.0 for t in tags]
        path = fig_dir / f"accuracy_{safe}.png"
        _bar_chart(path, tags, accuracy,
                   f"Accuracy per variant ({model_id})", "accuracy (%)")
        written.append(path)

        def overall_v_context(tag):
            stats = model_doc[tag].get("volume", {}).get("overall")
            return 100.0 * stats["v_context"] if stats else 0.0

        path = fig_dir / f"context_volume_{safe}.png"
        _bar_chart(path, tags, [overall_v_context(t) for t in tags],
                   f"Context attribution volume ({model_id})",
                   "context volume (%)")
        written.append(path)

        def split_v_context(tag, key):
            stats = model_doc[tag].get("volume", {}).get(key)
            return 100.0 * stats["v_context"] if stats else 0.0

        path = fig_dir / f"context_volume_split_{safe}.png"
        _bar_chart(
            path, tags,
            [[split_v_context(t, "correct") for t in tags],
             [split_v_context(t, "wrong") for t in tags]],
            f"Context volume by correctness ({model_id})",
            "context volume (%)",
            series_labels=("correct", "wrong"),
        )
        written.append(path)
    return written
