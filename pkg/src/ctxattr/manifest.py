"""Line-delimited JSON manifests naming the dataset samples.

One record per line: {"sample_id", "image_path", "mask_path", "class_id",
"class_name"}. Relative paths are resolved against the manifest's
directory, so fixture trees stay relocatable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import IoError, SchemaError
from .tensor import load_image, load_mask

REQUIRED_FIELDS = ("sample_id", "image_path", "mask_path", "class_id", "class_name")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    image_path: str
    mask_path: str
    class_id: int
    class_name: str


def _record_from_doc(doc: dict, line_no: int) -> SampleRecord:
    if not isinstance(doc, dict):
        raise SchemaError(f"line {line_no}: expected an object, got {type(doc).__name__}")
    missing = [f for f in REQUIRED_FIELDS if f not in doc]
    if missing:
        raise SchemaError(f"line {line_no}: missing fields {missing}")
    if not isinstance(doc["class_id"], int) or isinstance(doc["class_id"], bool):
        raise SchemaError(f"line {line_no}: class_id must be an integer")
    return SampleRecord(
        sample_id=str(doc["sample_id"]),
        image_path=str(doc["image_path"]),
        mask_path=str(doc["mask_path"]),
        class_id=doc["class_id"],
        class_name=str(doc["class_name"]),
    )


def read_manifest(path) -> list[SampleRecord]:
    """Parse a JSONL manifest, resolving relative paths against its
    directory. Raises SchemaError with the offending line number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    base = path.parent
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: not valid JSON: {exc}") from exc
        rec = _record_from_doc(doc, line_no)
        records.append(SampleRecord(
            sample_id=rec.sample_id,
            image_path=str((base / rec.image_path).resolve())
            if not Path(rec.image_path).is_absolute() else rec.image_path,
            mask_path=str((base / rec.mask_path).resolve())
            if not Path(rec.mask_path).is_absolute() else rec.mask_path,
            class_id=rec.class_id,
            class_name=rec.class_name,
        ))
    return records


def write_manifest(records, path) -> None:
    path = Path(path)
    lines = [json.dumps(asdict(rec), sort_keys=True) for rec in records]
    try:
        path.write_text("\n".join(lines) + "\n" if lines else "")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def validate_manifest(path) -> tuple[list[SampleRecord], list[str]]:
    """Structural and referential checks over a manifest.

    Returns (records, diagnostics); an empty diagnostics list means the
    manifest is valid. Checks: unique sample ids, image/mask files load,
    image and mask dimensions agree, class ids cover [0, C).
    """
    records = read_manifest(path)
    diagnostics: list[str] = []

    seen: dict = {}
    for line_no, rec in enumerate(records, start=1):
        if rec.sample_id in seen:
            diagnostics.append(
                f"duplicate sample_id {rec.sample_id!r} on lines "
                f"{seen[rec.sample_id]} and {line_no}"
            )
        else:
            seen[rec.sample_id] = line_no

    class_count = len({rec.class_id for rec in records})
    for rec in records:
        if not 0 <= rec.class_id < class_count:
            diagnostics.append(
                f"sample {rec.sample_id!r}: class_id {rec.class_id} outside "
                f"[0, {class_count})"
            )

    for rec in records:
        try:
            image = load_image(rec.image_path)
        except Exception as exc:
            diagnostics.append(f"sample {rec.sample_id!r}: image unreadable: {exc}")
            continue
        try:
            mask = load_mask(rec.mask_path)
        except Exception as exc:
            diagnostics.append(f"sample {rec.sample_id!r}: mask unreadable: {exc}")
            continue
        if (image.height, image.width) != (mask.height, mask.width):
            diagnostics.append(
                f"sample {rec.sample_id!r}: image ({image.height}, "
                f"{image.width}) and mask ({mask.height}, {mask.width}) "
                "dimensions differ"
            )
    return records, diagnostics
