"""Classify every (sample, variant) pair and emit predictions JSONL.

The model runs in eval mode under no_grad, so two runs over the same
inputs produce identical files. When a superclass mapping is configured,
the model's top-1 class index is translated through it before being
recorded; a top-1 class outside the mapping records predicted_class -1,
which can never match a label — the sample counts as misclassified.
Correctness itself is never written: the consumer re-derives it from the
two class fields.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .config import RunnerConfig
from .errors import MappingError
from .interchange import (
    discover_variants,
    read_manifest,
    variant_image_path,
    write_json,
    write_predictions,
)
from .inputs import batched, load_batch
from .models import load_model

UNMAPPED_CLASS = -1


def load_superclass_map(path) -> dict[int, int]:
    """Read a {model class index -> dataset class id} JSON mapping."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise MappingError(f"cannot read mapping {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MappingError(f"mapping {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MappingError(f"mapping {path} must be a JSON object")
    mapping = {}
    for key, value in doc.items():
        try:
            model_class = int(key)
        except ValueError as exc:
            raise MappingError(
                f"mapping {path}: key {key!r} is not an integer"
            ) from exc
        if not isinstance(value, int) or isinstance(value, bool):
            raise MappingError(
                f"mapping {path}: value for {key!r} must be an integer"
            )
        mapping[model_class] = value
    if not mapping:
        raise MappingError(f"mapping {path} is empty")
    return mapping


def shard_samples(samples: list, shard_index: int, shards: int) -> list:
    """Stable round-robin shard over the manifest order."""
    return [s for i, s in enumerate(samples) if i % shards == shard_index]


def run_inference(config: RunnerConfig) -> dict:
    """Run the classifier over every (sample, variant); returns a summary.

    Writes the predictions JSONL (per-shard name when sharded) and a
    ``.meta.json`` provenance sidecar next to it.
    """
    samples = shard_samples(
        read_manifest(config.manifest), config.shard_index, config.shards
    )
    tags = discover_variants(config.variants)
    mapping = (
        load_superclass_map(config.superclass_map)
        if config.superclass_map else None
    )
    model_id, module, provenance = load_model(
        config.model, weights=config.weights, checkpoint=config.checkpoint,
        builder=config.builder, device=config.device,
    )

    row_model_id = config.resolved_model_id()
    rows = []
    with torch.no_grad():
        for tag in tags:
            for chunk in batched(samples, config.batch_size):
                paths = [
                    variant_image_path(config.variants, tag, s.sample_id)
                    for s in chunk
                ]
                batch = load_batch(paths, model_id.preprocess, config.device)
                probs = torch.softmax(module(batch), dim=1)
                scores, top1 = probs.max(dim=1)
                for sample, klass, score in zip(
                    chunk, top1.tolist(), scores.tolist()
                ):
                    predicted = (
                        mapping.get(klass, UNMAPPED_CLASS)
                        if mapping is not None else klass
                    )
                    rows.append({
                        "sample_id": sample.sample_id,
                        "variant": tag,
                        "model_id": row_model_id,
                        "predicted_class": predicted,
                        "label_class": sample.class_id,
                        "score": score,
                    })

    out_path = config.predictions_path()
    write_predictions(rows, out_path)
    summary = {
        "rows": len(rows),
        "samples": len(samples),
        "variants": tags,
        "model_id": row_model_id,
        "superclass_mapping": (
            {"path": config.superclass_map, "entries": len(mapping)}
            if mapping is not None else None
        ),
        "shard": {"index": config.shard_index, "of": config.shards},
        "batch_size": config.batch_size,
        "provenance": provenance,
    }
    write_json(summary, out_path.with_suffix(".meta.json"))
    return summary
