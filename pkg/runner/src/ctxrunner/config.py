"""Runner configuration: a JSON file and/or CLI flags.

Keys: manifest, variants, out, model, weights, checkpoint, builder,
method, layer, batch_size, device, model_id, superclass_map, shard_index,
shards. Flags win over file values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class RunnerConfig:
    manifest: str
    variants: str
    out: str
    model: str = "resnet50"
    weights: str | None = None
    checkpoint: str | None = None
    builder: str | None = None
    method: str = "gradcam"
    layer: str | None = None
    batch_size: int = 16
    device: str = "cpu"
    model_id: str | None = None
    superclass_map: str | None = None
    shard_index: int = 0
    shards: int = 1

    def __post_init__(self):
        for key in ("manifest", "variants", "out"):
            if not getattr(self, key):
                raise ConfigError(f"{key} is required")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError("batch_size must be a positive integer")
        if not isinstance(self.shards, int) or self.shards < 1:
            raise ConfigError("shards must be a positive integer")
        if not isinstance(self.shard_index, int) \
                or not 0 <= self.shard_index < self.shards:
            raise ConfigError(
                f"shard_index must be in [0, {self.shards}), "
                f"got {self.shard_index}"
            )
        if not self.method:
            raise ConfigError("method must not be empty")

    def resolved_model_id(self) -> str:
        return self.model_id if self.model_id else self.model

    def predictions_path(self) -> Path:
        out = Path(self.out)
        if self.shards == 1:
            return out / "predictions.jsonl"
        return out / f"predictions.shard{self.shard_index}of{self.shards}.jsonl"

    def maps_dir(self) -> Path:
        return Path(self.out) / "maps"


def read_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    known = {f.name for f in fields(RunnerConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {unknown}")
    return doc


def make_config(file_values: dict | None, flag_values: dict) -> RunnerConfig:
    """Merge config-file values with CLI flags; flags win."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    known = {f.name for f in fields(RunnerConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys {unknown}")
    try:
        return RunnerConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
