"""Manifest parsing, round-tripping, and validation diagnostics."""

import json

import numpy as np
import pytest

from ctxattr.errors import IoError, SchemaError
from ctxattr.manifest import (
    SampleRecord,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from ctxattr.tensor import BinaryMask, ImageTensor, save_image, save_mask


def _write_sample(root, sample_id, class_id, size=(8, 8), mask_size=None):
    rng = np.random.default_rng(hash(sample_id) % 2**32)
    h, w = size
    image = ImageTensor(rng.uniform(0, 1, (3, h, w)).astype(np.float32))
    mh, mw = mask_size or size
    mask_data = np.zeros((mh, mw), dtype=np.uint8)
    mask_data[: mh // 2, : mw // 2] = 1
    (root / "images").mkdir(exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    save_image(image, root / "images" / f"{sample_id}.png")
    save_mask(BinaryMask(mask_data), root / "masks" / f"{sample_id}.png")
    return SampleRecord(
        sample_id=sample_id,
        image_path=f"images/{sample_id}.png",
        mask_path=f"masks/{sample_id}.png",
        class_id=class_id,
        class_name=f"class{class_id}",
    )


@pytest.fixture()
def small_tree(tmp_path):
    records = [_write_sample(tmp_path, f"a{i}", i % 2) for i in range(3)]
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest, records


class TestReadWrite:
    def test_round_trip_preserves_fields(self, small_tree):
        manifest, records = small_tree
        loaded = read_manifest(manifest)
        assert [r.sample_id for r in loaded] == [r.sample_id for r in records]
        assert [r.class_id for r in loaded] == [r.class_id for r in records]
        assert [r.class_name for r in loaded] == [r.class_name for r in records]

    def test_relative_paths_resolved_against_manifest_dir(self, small_tree):
        manifest, _ = small_tree
        loaded = read_manifest(manifest)
        for rec in loaded:
            assert rec.image_path.startswith(str(manifest.parent))
            assert rec.mask_path.startswith(str(manifest.parent))

    def test_absolute_paths_kept(self, tmp_path):
        rec = _write_sample(tmp_path, "abs0", 0)
        abs_rec = SampleRecord(
            sample_id="abs0",
            image_path=str(tmp_path / rec.image_path),
            mask_path=str(tmp_path / rec.mask_path),
            class_id=0,
            class_name="class0",
        )
        manifest = tmp_path / "m.jsonl"
        write_manifest([abs_rec], manifest)
        loaded = read_manifest(manifest)
        assert loaded[0].image_path == abs_rec.image_path

    def test_missing_file_raises_io_error(self, tmp_path):
        with pytest.raises(IoError):
            read_manifest(tmp_path / "nope.jsonl")

    def test_bad_json_names_line(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        good = json.dumps({
            "sample_id": "a", "image_path": "x.png", "mask_path": "y.png",
            "class_id": 0, "class_name": "zero",
        })
        manifest.write_text(good + "\nnot json\n")
        with pytest.raises(SchemaError, match="line 2"):
            read_manifest(manifest)

    def test_missing_field_names_line_and_fields(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text(json.dumps({"sample_id": "a", "class_id": 0}) + "\n")
        with pytest.raises(SchemaError, match="line 1.*image_path"):
            read_manifest(manifest)

    def test_non_integer_class_rejected(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        doc = {
            "sample_id": "a", "image_path": "x.png", "mask_path": "y.png",
            "class_id": "zero", "class_name": "zero",
        }
        manifest.write_text(json.dumps(doc) + "\n")
        with pytest.raises(SchemaError, match="class_id"):
            read_manifest(manifest)

    def test_blank_lines_skipped(self, small_tree):
        manifest, records = small_tree
        manifest.write_text(manifest.read_text() + "\n\n")
        assert len(read_manifest(manifest)) == len(records)


class TestValidate:
    def test_well_formed_manifest_has_no_diagnostics(self, small_tree):
        manifest, records = small_tree
        loaded, diagnostics = validate_manifest(manifest)
        assert diagnostics == []
        assert len(loaded) == len(records)

    def test_duplicate_sample_id_names_both_lines(self, tmp_path):
        rec = _write_sample(tmp_path, "dup", 0)
        other = _write_sample(tmp_path, "dup2", 1)
        duped = SampleRecord(
            sample_id="dup", image_path=other.image_path,
            mask_path=other.mask_path, class_id=1, class_name="class1",
        )
        manifest = tmp_path / "m.jsonl"
        write_manifest([rec, other, duped], manifest)
        _, diagnostics = validate_manifest(manifest)
        assert any("'dup'" in d and "lines 1 and 3" in d for d in diagnostics)

    def test_mask_image_dim_mismatch_names_sample(self, tmp_path):
        rec = _write_sample(tmp_path, "mismatch", 0, size=(8, 8), mask_size=(6, 6))
        manifest = tmp_path / "m.jsonl"
        write_manifest([rec], manifest)
        _, diagnostics = validate_manifest(manifest)
        assert any("'mismatch'" in d and "dimensions differ" in d
                   for d in diagnostics)

    def test_unreadable_image_reported_per_sample(self, tmp_path):
        rec = _write_sample(tmp_path, "gone", 0)
        (tmp_path / "images" / "gone.png").unlink()
        manifest = tmp_path / "m.jsonl"
        write_manifest([rec], manifest)
        _, diagnostics = validate_manifest(manifest)
        assert any("'gone'" in d and "image unreadable" in d for d in diagnostics)

    def test_class_id_outside_range_reported(self, tmp_path):
        recs = [_write_sample(tmp_path, "c0", 0), _write_sample(tmp_path, "c5", 5)]
        manifest = tmp_path / "m.jsonl"
        write_manifest(recs, manifest)
        _, diagnostics = validate_manifest(manifest)
        assert any("'c5'" in d and "outside" in d for d in diagnostics)

    def test_contiguous_classes_pass(self, tmp_path):
        recs = [_write_sample(tmp_path, f"k{i}", i) for i in range(3)]
        manifest = tmp_path / "m.jsonl"
        write_manifest(recs, manifest)
        _, diagnostics = validate_manifest(manifest)
        assert diagnostics == []

    def test_multiple_problems_all_reported(self, tmp_path):
        rec_ok = _write_sample(tmp_path, "ok", 0)
        rec_bad = _write_sample(tmp_path, "bad", 9, size=(8, 8), mask_size=(4, 4))
        manifest = tmp_path / "m.jsonl"
        write_manifest([rec_ok, rec_bad], manifest)
        _, diagnostics = validate_manifest(manifest)
        assert len(diagnostics) == 2
