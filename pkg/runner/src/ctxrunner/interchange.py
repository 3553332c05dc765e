"""The file contracts the runner consumes and emits.

Inputs: the dataset manifest (JSONL; sample_id, image_path, mask_path,
class_id, class_name; relative paths resolve against the manifest's
directory) and a variant directory laid out as ``<tag>/<sample_id>.png``.

Outputs: predictions JSONL (exactly sample_id, variant, model_id,
predicted_class, label_class, score per row) and attribution maps in the
"ATTR" binary format (magic ``ATTR``, u16 version = 1, u16 reserved = 0,
u32 height, u32 width, little-endian, then height x width little-endian
float32 values, row-major), one file per (variant, sample) at
``<maps_dir>/<variant>/<sample_id>.attr``.

All files are written atomically (temp file + rename in the same
directory), so a crashed or concurrent sharded run never leaves a
half-written record behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError, MissingImageError

MANIFEST_FIELDS = (
    "sample_id", "image_path", "mask_path", "class_id", "class_name",
)
PREDICTION_FIELDS = (
    "sample_id", "variant", "model_id", "predicted_class", "label_class",
    "score",
)
ATTR_MAGIC = b"ATTR"
ATTR_VERSION = 1
_ATTR_HEADER = struct.Struct("<4sHHII")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_path: Path
    class_id: int
    class_name: str


def read_manifest(path) -> list[Sample]:
    """Parse the dataset manifest; relative paths resolve against it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    base = path.parent
    samples = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(
                f"{path}: line {line_no}: not valid JSON: {exc}"
            ) from exc
        missing = [f for f in MANIFEST_FIELDS if f not in doc]
        if missing:
            raise ManifestError(
                f"{path}: line {line_no}: missing fields {missing}"
            )
        class_id = doc["class_id"]
        if not isinstance(class_id, int) or isinstance(class_id, bool):
            raise ManifestError(
                f"{path}: line {line_no}: class_id must be an integer"
            )
        image = Path(doc["image_path"])
        if not image.is_absolute():
            image = base / image
        samples.append(Sample(
            sample_id=str(doc["sample_id"]),
            image_path=image,
            class_id=class_id,
            class_name=str(doc["class_name"]),
        ))
    if not samples:
        raise ManifestError(f"{path}: manifest is empty")
    return samples


def discover_variants(variant_dir) -> list[str]:
    """Variant tags are the subdirectory names of the variant directory."""
    variant_dir = Path(variant_dir)
    if not variant_dir.is_dir():
        raise MissingImageError(f"variant directory {variant_dir} not found")
    tags = sorted(d.name for d in variant_dir.iterdir() if d.is_dir())
    if not tags:
        raise MissingImageError(
            f"variant directory {variant_dir} has no variant subdirectories"
        )
    return tags


def variant_image_path(variant_dir, tag: str, sample_id: str) -> Path:
    path = Path(variant_dir) / tag / f"{sample_id}.png"
    if not path.is_file():
        raise MissingImageError(
            f"no image for sample {sample_id!r} variant {tag!r} at {path}"
        )
    return path


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_predictions(rows: list[dict], path) -> None:
    """Write prediction rows sorted by (sample_id, variant, model_id)."""
    ordered = sorted(
        rows, key=lambda r: (r["sample_id"], r["variant"], r["model_id"])
    )
    lines = []
    for row in ordered:
        doc = {field: row[field] for field in PREDICTION_FIELDS}
        lines.append(json.dumps(doc, sort_keys=True))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def write_attr_map(data: np.ndarray, path) -> None:
    """Write a non-negative float32 map in the ATTR binary format."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"attribution map must be 2-D, got {arr.ndim}-D")
    header = _ATTR_HEADER.pack(
        ATTR_MAGIC, ATTR_VERSION, 0, arr.shape[0], arr.shape[1]
    )
    atomic_write_bytes(path, header + arr.tobytes())


def write_json(doc: dict, path) -> None:
    atomic_write_bytes(
        path, (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
    )
