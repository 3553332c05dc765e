"""Shared dataset and model registrations for the runner tests.

The dataset is the analysis toolkit's demo fixture with two variants
synthesized by its pipeline, so the runner is exercised against the exact
directory layout it consumes in production.
"""

from types import SimpleNamespace

import pytest

from ctxattr.fixtures import build_fixture
from ctxattr.manifest import read_manifest as ctx_read_manifest, write_manifest
from ctxattr.metrics import context_fraction_filter
from ctxattr.pipeline import RunConfig, parse_variant_tag, run_pipeline

import toymodels
from toymodels import TAGS
from ctxrunner.models import register_model

register_model(toymodels.build_tiny_cnn()[0],
               lambda: toymodels.build_tiny_cnn()[1])
register_model(toymodels.build_color_probe()[0],
               lambda: toymodels.build_color_probe()[1])
register_model(toymodels.build_tiny_vit()[0],
               lambda: toymodels.build_tiny_vit()[1])


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("runner_data")
    full_manifest = build_fixture(root / "demo")
    out = root / "pipeline"
    run_pipeline(
        RunConfig(
            manifest=str(full_manifest), out_dir=str(out),
            network=str(root / "demo" / "network.json"),
            variants=tuple(parse_variant_tag(tag) for tag in TAGS),
        ),
        stages=("synthesize",),
    )
    # The pipeline synthesizes only filter-surviving samples; the runner's
    # manifest must cover exactly what exists on disk.
    kept, _ = context_fraction_filter(ctx_read_manifest(full_manifest))
    manifest = root / "manifest.jsonl"
    write_manifest(kept, manifest)
    return SimpleNamespace(
        manifest=manifest,
        variants=out / "variants",
        labels={r.sample_id: r.class_id for r in kept},
        names={r.sample_id: r.class_name for r in kept},
        sample_ids=sorted(r.sample_id for r in kept),
    )
