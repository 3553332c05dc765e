"""Manifest-driven orchestration: filter, synthesize, predict, attribute,
analyze, report.

A run writes a self-describing output tree:

    out/
      INCOMPLETE            marker; present only while a run is in flight
                            (or after an aborted one)
      filter.json           context-filter stats and kept sample ids
      variants/<tag>/<id>.png (+ .json sidecar per image)
      predictions.jsonl     one row per (sample, variant)
      maps/<tag>/<id>.attr  (+ .json sidecar per map)
      analysis.json         full result bundle, raw values
      report/report.csv     one row per (model, variant, subset), percents
      report/report.json    the same bundle as analysis.json
      report/figures/*.png  bar charts rendered from the bundle

External predictions/maps plug in through the identical layout, so the
analyze stage is source-agnostic.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribution import MethodSpec, attribute, method_metadata
from .engine import forward, load_network, softmax
from .errors import (
    CtxAttrError,
    FilterEmptied,
    IoError,
    ManifestError,
    MissingMapError,
    OrphanRecordError,
    ParamError,
    SchemaError,
    StageError,
    ZeroAttributionError,
)
from .manifest import SampleRecord, validate_manifest
from .metrics import (
    PredictionRecord,
    accuracy_table,
    aggregate,
    context_fraction_filter,
    size_strata,
    volume_attribution,
)
from .synthesis import (
    CORRUPTION_KINDS,
    MIXED_KINDS,
    VARIANT_KINDS,
    CorruptionSpec,
    VariantSpec,
    apply_variant,
    derive_seed,
    make_donor_background,
    pick_donor,
)
from .tensor import (
    load_image,
    load_mask,
    read_attr_map,
    resize_bilinear,
    resize_image_bilinear,
    save_image,
    write_attr_map,
)

PREDICTION_FIELDS = ("sample_id", "variant", "model_id", "predicted_class",
                     "label_class", "score")

# Report grouping: context-change variants vs context-perturbation
# (corruption) variants, and the variants whose replaced context carries
# no scene information at all.
CC_TAGS = ("only_fg", "mixed_next", "mixed_rand", "mixed_same")
NO_INFO_TAGS = ("only_fg", "gaussian_noise_bg", "white_noise_bg",
                "meannorm_noise_bg")

_CP_TAG_RE = re.compile(r"(" + "|".join(CORRUPTION_KINDS) + r")_s([1-5])")
_TAG_RE = re.compile(r"[A-Za-z0-9_]+")

ALL_STAGES = ("synthesize", "predict", "attribute", "analyze", "report")


def is_cp_tag(tag: str) -> bool:
    return _CP_TAG_RE.fullmatch(tag) is not None


def parse_variant_tag(tag: str, severity: int = 3) -> VariantSpec:
    """Turn a report tag back into a VariantSpec. Plain kinds name
    themselves; corruptions are '<kind>_s<severity>' or bare '<kind>'
    (which takes the default severity)."""
    match = _CP_TAG_RE.fullmatch(tag)
    if match:
        return VariantSpec("corrupt_context",
                           CorruptionSpec(match.group(1), int(match.group(2))))
    if tag in CORRUPTION_KINDS:
        return VariantSpec("corrupt_context", CorruptionSpec(tag, severity))
    if tag in VARIANT_KINDS and tag != "corrupt_context":
        return VariantSpec(tag)
    raise ParamError(f"unknown variant tag {tag!r}")


def default_variants(severity: int = 3) -> tuple[VariantSpec, ...]:
    """original + the four context-change variants + the three
    no-information backgrounds + the five corruptions at one severity."""
    plain = [VariantSpec(k) for k in (
        "original", "only_fg", "mixed_same", "mixed_rand", "mixed_next",
        "gaussian_noise_bg", "white_noise_bg", "meannorm_noise_bg",
    )]
    corrupt = [VariantSpec("corrupt_context", CorruptionSpec(kind, severity))
               for kind in CORRUPTION_KINDS]
    return tuple(plain + corrupt)


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run depends on.

    Model source is either builtin (network = path to an engine JSON file)
    or external (external_preds JSONL + external_maps directory); exactly
    one must be set for stages that need a model. jobs and out_dir never
    influence report bytes. manifest may be None only for report-only runs,
    which re-render from a stored analysis.
    """

    manifest: str | None
    out_dir: str
    seed: int = 2024
    variants: tuple = ()
    network: str | None = None
    external_preds: str | None = None
    external_maps: str | None = None
    method: MethodSpec = field(default_factory=lambda: MethodSpec("gradcam"))
    context_threshold: float = 0.30
    severity: int = 3
    jobs: int = 1
    model_id: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.context_threshold < 1.0:
            raise ParamError(
                f"context threshold must be in [0, 1), got {self.context_threshold}"
            )
        if not 1 <= self.severity <= 5:
            raise ParamError(f"severity must be in 1..5, got {self.severity}")
        if self.jobs < 1:
            raise ParamError(f"jobs must be >= 1, got {self.jobs}")
        variants = tuple(self.variants) or default_variants(self.severity)
        tags = [v.tag for v in variants]
        if len(set(tags)) != len(tags):
            raise ParamError(f"duplicate variant tags in {tags}")
        object.__setattr__(self, "variants", variants)
        if self.external_preds is not None or self.external_maps is not None:
            if self.external_preds is None or self.external_maps is None:
                raise ParamError(
                    "external mode needs both a predictions file and a maps directory"
                )
            if self.network is not None:
                raise ParamError("choose either a builtin network or external inputs")

    @property
    def external(self) -> bool:
        return self.external_preds is not None

    @property
    def tags(self) -> tuple:
        return tuple(v.tag for v in self.variants)

    def resolved_model_id(self) -> str:
        if self.model_id:
            return self.model_id
        if self.network:
            return f"builtin:{Path(self.network).stem}"
        return "external"

    def echo(self) -> dict:
        """Configuration as recorded in provenance. Excludes out_dir and
        jobs so reports stay byte-identical across output locations and
        worker counts."""
        return {
            "manifest": str(self.manifest) if self.manifest else None,
            "seed": self.seed,
            "variants": list(self.tags),
            "network": str(self.network) if self.network else None,
            "external_preds": str(self.external_preds) if self.external_preds else None,
            "external_maps": str(self.external_maps) if self.external_maps else None,
            "method": {
                "kind": self.method.kind,
                "target_layer": self.method.target_layer,
                "guided_reduction": self.method.guided_reduction,
            },
            "context_threshold": self.context_threshold,
            "severity": self.severity,
            "model_id": self.resolved_model_id(),
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.echo(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def write_predictions(rows, path) -> None:
    rows = sorted(rows, key=lambda r: (r.sample_id, r.variant, r.model_id))
    lines = []
    for row in rows:
        lines.append(json.dumps({
            "sample_id": row.sample_id,
            "variant": row.variant,
            "model_id": row.model_id,
            "predicted_class": row.predicted_class,
            "label_class": row.label_class,
            "score": row.score,
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")


def read_predictions(path, labels: dict | None = None) -> list:
    """Parse a predictions JSONL file into PredictionRecords.

    Rows must carry exactly the documented fields. When labels (sample_id
    -> class_id) is given, each row's label_class must agree with it —
    correctness is always derived from the manifest, never trusted.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise SchemaError(f"line {line_no}: expected an object")
        missing = [f for f in PREDICTION_FIELDS if f not in doc]
        extra = [k for k in doc if k not in PREDICTION_FIELDS]
        if missing or extra:
            raise SchemaError(
                f"line {line_no}: missing fields {missing}, unknown fields {extra}"
            )
        for int_field in ("predicted_class", "label_class"):
            value = doc[int_field]
            if not isinstance(value, int) or isinstance(value, bool):
                raise SchemaError(f"line {line_no}: {int_field} must be an integer")
        if not isinstance(doc["score"], (int, float)) or isinstance(doc["score"], bool) \
                or not np.isfinite(doc["score"]):
            raise SchemaError(f"line {line_no}: score must be a finite number")
        variant = str(doc["variant"])
        if not _TAG_RE.fullmatch(variant):
            raise SchemaError(f"line {line_no}: malformed variant tag {variant!r}")
        sample_id = str(doc["sample_id"])
        if labels is not None and sample_id in labels \
                and doc["label_class"] != labels[sample_id]:
            raise SchemaError(
                f"line {line_no}: label_class {doc['label_class']} disagrees "
                f"with the manifest class {labels[sample_id]} for {sample_id!r}"
            )
        rows.append(PredictionRecord(
            sample_id=sample_id,
            variant=variant,
            model_id=str(doc["model_id"]),
            predicted_class=doc["predicted_class"],
            label_class=doc["label_class"],
            score=float(doc["score"]),
        ))
    return rows


@dataclass(frozen=True)
class JoinedRecord:
    """One prediction row joined with its attribution map file."""

    pred: PredictionRecord
    map_path: str


def map_path_for(maps_dir, variant: str, sample_id: str) -> Path:
    return Path(maps_dir) / variant / f"{sample_id}.attr"


def ingest_external(preds_path, maps_dir, manifest,
                    known_ids=None) -> tuple[list, dict]:
    """Join a predictions JSONL with a directory of ATTR maps.

    manifest is the post-filter sample list; known_ids (default: the
    manifest's ids) widens the orphan check to samples that were merely
    filtered out, whose rows are counted and ignored rather than rejected.
    Returns (joined records, reconciliation stats).
    """
    manifest = list(manifest)
    by_id = {rec.sample_id: rec for rec in manifest}
    if known_ids is None:
        known_ids = set(by_id)
    labels = {rec.sample_id: rec.class_id for rec in manifest}
    rows = read_predictions(preds_path, labels=labels)

    seen = set()
    joined = []
    ignored_filtered = 0
    for row in rows:
        if row.sample_id not in known_ids:
            raise OrphanRecordError(
                f"prediction for unknown sample {row.sample_id!r} "
                f"(variant {row.variant!r})"
            )
        if row.sample_id not in by_id:
            ignored_filtered += 1
            continue
        key = (row.sample_id, row.variant, row.model_id)
        if key in seen:
            raise SchemaError(f"duplicate prediction row for {key}")
        seen.add(key)
        path = map_path_for(maps_dir, row.variant, row.sample_id)
        if not path.is_file():
            raise MissingMapError(
                f"no attribution map for sample {row.sample_id!r} "
                f"variant {row.variant!r} (expected {path})"
            )
        joined.append(JoinedRecord(pred=row, map_path=str(path)))

    variants = sorted({j.pred.variant for j in joined})
    models = sorted({j.pred.model_id for j in joined})
    per_variant = {
        tag: sum(1 for j in joined if j.pred.variant == tag) for tag in variants
    }
    reconciliation = {
        "rows_read": len(rows),
        "rows_joined": len(joined),
        "rows_ignored_filtered": ignored_filtered,
        "expected_rows": len(manifest) * len(variants) * max(len(models), 1),
        "variants": per_variant,
        "models": models,
    }
    return joined, reconciliation


def _pool_map(jobs: int, fn, items):
    """Order-preserving map, threaded when jobs > 1. Results are collected
    in input order, so downstream output is schedule-independent."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


class _Run:
    """State shared by the pipeline stages of one invocation."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out_dir)
        self.records: list[SampleRecord] = []
        self.kept: list[SampleRecord] = []
        self.filter_stats: dict = {}
        self.masks: dict = {}
        self.strata: dict = {}
        self.synthesis_meta: list[dict] = []
        self.preds: list[PredictionRecord] = []
        self.joined: list[JoinedRecord] = []
        self.reconciliation: dict = {}
        self.analysis: dict = {}

    # -- validate + filter (always run; they are cheap and deterministic) --

    def validate_and_filter(self):
        records, diagnostics = validate_manifest(self.config.manifest)
        if diagnostics:
            raise ManifestError(diagnostics)
        self.records = records

        kept, stats = context_fraction_filter(
            records, self.config.context_threshold
        )
        if not kept:
            raise FilterEmptied(
                f"no sample has context fraction above "
                f"{self.config.context_threshold}"
            )
        self.kept = kept
        self.filter_stats = stats
        for rec in kept:
            mask = load_mask(rec.mask_path)
            self.masks[rec.sample_id] = mask
            self.strata[rec.sample_id] = size_strata(mask)
        _write_json({
            "stats": stats,
            "threshold": self.config.context_threshold,
            "kept_ids": [r.sample_id for r in kept],
        }, self.out / "filter.json")

    # -- synthesize -------------------------------------------------------

    def synthesize(self):
        cfg = self.config
        images = {rec.sample_id: load_image(rec.image_path) for rec in self.kept}
        donor_bg_cache: dict = {}

        def donor_background(donor: SampleRecord):
            bg = donor_bg_cache.get(donor.sample_id)
            if bg is None:
                bg = make_donor_background(
                    load_image(donor.image_path), load_mask(donor.mask_path)
                )
                donor_bg_cache[donor.sample_id] = bg
            return bg

        for spec in cfg.variants:
            (self.out / "variants" / spec.tag).mkdir(parents=True, exist_ok=True)

        def synthesize_one(task):
            rec, spec = task
            image = images[rec.sample_id]
            mask = self.masks[rec.sample_id]
            seed = derive_seed(cfg.seed, rec.sample_id, spec.tag)
            meta = {
                "sample_id": rec.sample_id,
                "variant": spec.tag,
                "kind": spec.kind,
                "seed": seed if spec.stochastic else None,
            }
            donor_bg = None
            if spec.kind in MIXED_KINDS:
                strategy = spec.kind.split("_", 1)[1]
                donor = pick_donor(strategy, rec, self.kept, cfg.seed)
                donor_bg = donor_background(donor)
                resized = (donor_bg.height, donor_bg.width) != (mask.height, mask.width)
                if resized:
                    donor_bg = resize_image_bilinear(
                        donor_bg, mask.height, mask.width
                    )
                meta["donor_id"] = donor.sample_id
                meta["donor_resized"] = resized
            out_img = apply_variant(image, mask, spec, seed=seed, donor_bg=donor_bg)
            stem = self.out / "variants" / spec.tag / rec.sample_id
            save_image(out_img, stem.with_suffix(".png"))
            _write_json(meta, stem.with_suffix(".json"))
            return meta

        tasks = [(rec, spec) for rec in self.kept for spec in cfg.variants]
        self.synthesis_meta = _pool_map(cfg.jobs, synthesize_one, tasks)

    # -- predict ----------------------------------------------------------

    def predict(self):
        cfg = self.config
        if cfg.network is None:
            raise ParamError("the predict stage needs a builtin network file")
        net = load_network(cfg.network)
        model_id = cfg.resolved_model_id()

        def predict_one(task):
            rec, tag = task
            path = self.out / "variants" / tag / f"{rec.sample_id}.png"
            if not path.is_file():
                raise IoError(
                    f"variant image missing for sample {rec.sample_id!r} "
                    f"variant {tag!r} (expected {path}); run synthesize first"
                )
            x = load_image(path).data.astype(np.float64)
            logits, _ = forward(net, x)
            probs = softmax(logits)
            predicted = int(np.argmax(logits))
            return PredictionRecord(
                sample_id=rec.sample_id,
                variant=tag,
                model_id=model_id,
                predicted_class=predicted,
                label_class=rec.class_id,
                score=float(probs[predicted]),
            )

        tasks = [(rec, tag) for rec in self.kept for tag in cfg.tags]
        self.preds = _pool_map(cfg.jobs, predict_one, tasks)
        write_predictions(self.preds, self.out / "predictions.jsonl")

    # -- attribute --------------------------------------------------------

    def attribute(self):
        cfg = self.config
        if cfg.network is None:
            raise ParamError("the attribute stage needs a builtin network file")
        net = load_network(cfg.network)
        by_pair = {(p.sample_id, p.variant): p for p in self.preds}

        for tag in cfg.tags:
            (self.out / "maps" / tag).mkdir(parents=True, exist_ok=True)

        def attribute_one(task):
            rec, tag = task
            pred = by_pair[(rec.sample_id, tag)]
            image_path = self.out / "variants" / tag / f"{rec.sample_id}.png"
            x = load_image(image_path).data.astype(np.float64)
            map_ = attribute(cfg.method, net, x, pred.predicted_class)
            stem = self.out / "maps" / tag / rec.sample_id
            write_attr_map(map_, stem.with_suffix(".attr"))
            sidecar = method_metadata(cfg.method, net, pred.predicted_class)
            sidecar.update({"sample_id": rec.sample_id, "variant": tag})
            _write_json(sidecar, stem.with_suffix(".json"))
            return str(stem.with_suffix(".attr"))

        tasks = [(rec, tag) for rec in self.kept for tag in cfg.tags]
        _pool_map(cfg.jobs, attribute_one, tasks)

    # -- analyze ----------------------------------------------------------

    def analyze(self):
        cfg = self.config
        preds_path = cfg.external_preds or self.out / "predictions.jsonl"
        maps_dir = cfg.external_maps or self.out / "maps"
        if not Path(preds_path).is_file():
            raise IoError(
                f"predictions file {preds_path} missing; run the predict "
                "and attribute stages (or point at external inputs)"
            )
        known_ids = {rec.sample_id for rec in self.records}
        self.joined, self.reconciliation = ingest_external(
            preds_path, maps_dir, self.kept, known_ids=known_ids
        )
        if not self.joined:
            raise SchemaError(f"predictions file {preds_path} has no usable rows")

        resized_maps = 0
        degenerate: list = []
        volume_rows: list = []

        def volume_one(joined: JoinedRecord):
            map_ = read_attr_map(joined.map_path)
            mask = self.masks[joined.pred.sample_id]
            resized = (map_.height, map_.width) != (mask.height, mask.width)
            if resized:
                map_ = resize_bilinear(map_, mask.height, mask.width)
            try:
                va = volume_attribution(map_, mask)
            except ZeroAttributionError:
                return joined, resized, None
            return joined, resized, va

        for joined, resized, va in _pool_map(cfg.jobs, volume_one, self.joined):
            pred = joined.pred
            if resized:
                resized_maps += 1
            if va is None:
                degenerate.append(
                    {"sample_id": pred.sample_id, "variant": pred.variant}
                )
                continue
            volume_rows.append({
                "model_id": pred.model_id,
                "sample_id": pred.sample_id,
                "variant": pred.variant,
                "correct": pred.correct,
                "stratum": self.strata[pred.sample_id],
                "v_object": va.v_object,
                "v_context": va.v_context,
            })

        models = sorted({j.pred.model_id for j in self.joined})
        models_doc: dict = {}
        summary_doc: dict = {}
        for model_id in models:
            preds_m = [j.pred for j in self.joined if j.pred.model_id == model_id]
            rows_m = [r for r in volume_rows if r["model_id"] == model_id]
            tags_m = sorted({p.variant for p in preds_m},
                            key=self._tag_sort_key)
            models_doc[model_id] = self._model_section(preds_m, rows_m, tags_m)
            summary_doc[model_id] = self._summary_section(preds_m, rows_m, tags_m)

        self.analysis = {
            "models": models_doc,
            "summary": summary_doc,
            "accounting": self._accounting(volume_rows, degenerate),
            "provenance": self._provenance(resized_maps, degenerate),
        }
        _write_json(self.analysis, self.out / "analysis.json")

    def _tag_sort_key(self, tag: str):
        order = {t: i for i, t in enumerate(self.config.tags)}
        return (order.get(tag, len(order)), tag)

    @staticmethod
    def _group(groups: dict, *key) -> dict | None:
        stats = groups.get(key)
        if stats is None:
            return None
        return {
            "count": stats["count"],
            "v_object": stats["v_object"],
            "v_context": stats["v_context"],
        }

    def _model_section(self, preds_m, rows_m, tags_m) -> dict:
        overall = aggregate(rows_m, ("variant",)) if rows_m else {}
        by_correct = aggregate(rows_m, ("variant", "correct")) if rows_m else {}
        by_stratum = aggregate(rows_m, ("variant", "stratum")) if rows_m else {}
        section = {}
        for tag in tags_m:
            tag_preds = [p for p in preds_m if p.variant == tag]
            accuracy = 100.0 * float(
                np.mean([p.correct for p in tag_preds])
            ) if tag_preds else None
            section[tag] = {
                "count": len(tag_preds),
                "accuracy_pct": accuracy,
                "volume": {
                    "overall": self._group(overall, tag),
                    "correct": self._group(by_correct, tag, True),
                    "wrong": self._group(by_correct, tag, False),
                    "strata": {
                        name: self._group(by_stratum, tag, name)
                        for name in ("large", "small", "other")
                        if self._group(by_stratum, tag, name) is not None
                    },
                },
            }
        return section

    def _summary_section(self, preds_m, rows_m, tags_m) -> dict:
        cc = tuple(t for t in tags_m if t in CC_TAGS)
        cp = tuple(t for t in tags_m if is_cp_tag(t))
        table = accuracy_table(preds_m, cc, cp)
        split_sizes = {}
        for tag in tags_m:
            tag_preds = [p for p in preds_m if p.variant == tag]
            split_sizes[tag] = {
                "correct": sum(1 for p in tag_preds if p.correct),
                "wrong": sum(1 for p in tag_preds if not p.correct),
            }
        overall = aggregate(rows_m, ("variant",)) if rows_m else {}
        no_info = {}
        for tag in tags_m:
            if tag not in NO_INFO_TAGS:
                continue
            tag_preds = [p for p in preds_m if p.variant == tag]
            no_info[tag] = {
                "accuracy_pct": 100.0 * float(
                    np.mean([p.correct for p in tag_preds])
                ) if tag_preds else None,
                "volume_overall": self._group(overall, tag),
            }
        return {
            "orig_accuracy": table.orig_accuracy,
            "mean_cc": table.mean_cc,
            "mean_cp": table.mean_cp,
            "decline_cc": table.decline_cc,
            "decline_cp": table.decline_cp,
            "cc_variants": list(cc),
            "cp_variants": list(cp),
            "split_sizes": split_sizes,
            "no_information": no_info,
        }

    def _accounting(self, volume_rows, degenerate) -> dict:
        records_in = len(self.records)
        reported = len(self.kept)
        filtered_out = records_in - reported
        models = len({j.pred.model_id for j in self.joined})
        doc = {
            "records_in": records_in,
            "records_filtered_out": filtered_out,
            "records_reported": reported,
            "identity_ok": records_in == filtered_out + reported,
            "prediction_rows": len(self.joined),
            "volume_rows": len(volume_rows),
            "degenerate_maps": len(degenerate),
            "volume_identity_ok":
                len(volume_rows) + len(degenerate) == len(self.joined),
            "models": models,
            "reconciliation": self.reconciliation,
        }
        if not doc["identity_ok"] or not doc["volume_identity_ok"]:
            raise StageError("analyze", f"accounting identity violated: {doc}")
        return doc

    def _provenance(self, resized_maps, degenerate) -> dict:
        return {
            "config": self.config.echo(),
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "variant_order": list(self.config.tags),
            "context_filter": self.filter_stats,
            "external_mode": self.config.external,
            "resized_maps": resized_maps,
            "degenerate_maps": degenerate,
            "strata": {sid: self.strata[sid] for sid in sorted(self.strata)},
        }

    # -- report -----------------------------------------------------------

    def report(self):
        from .figures import render_figures
        from .report import write_reports

        if not self.analysis:
            analysis_path = self.out / "analysis.json"
            if not analysis_path.is_file():
                raise IoError(
                    f"analysis file {analysis_path} missing; run analyze first"
                )
            self.analysis = json.loads(analysis_path.read_text())
        report_dir = self.out / "report"
        write_reports(self.analysis, report_dir)
        render_figures(self.analysis, report_dir / "figures")


def run_pipeline(config: RunConfig, stages=ALL_STAGES) -> dict:
    """Run the requested stages (validate + filter run first for any stage
    that reads the dataset; a report-only invocation renders straight from
    analysis.json and needs no manifest).

    Partial or aborted runs leave an INCOMPLETE marker file in the output
    directory; any failure is re-raised as a stage-tagged StageError.
    Returns the analysis bundle when the analyze or report stage ran.
    """
    unknown = [s for s in stages if s not in ALL_STAGES]
    if unknown:
        raise ParamError(f"unknown stages {unknown}; expected {ALL_STAGES}")
    if config.external:
        stages = [s for s in stages
                  if s not in ("synthesize", "predict", "attribute")]
    needs_dataset = set(stages) != {"report"}
    if needs_dataset and config.manifest is None:
        raise ParamError("a manifest is required (--manifest or config file)")

    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    marker = run.out / "INCOMPLETE"
    marker.write_text("run in progress or aborted\n")

    stage = "validate"
    try:
        if needs_dataset:
            run.validate_and_filter()
        for stage in ALL_STAGES:
            if stage not in stages:
                continue
            if stage == "attribute" and not run.preds:
                pred_file = run.out / "predictions.jsonl"
                if not pred_file.is_file():
                    raise ParamError(
                        "the attribute stage needs predictions; run predict first"
                    )
                labels = {rec.sample_id: rec.class_id for rec in run.kept}
                run.preds = read_predictions(pred_file, labels=labels)
            getattr(run, stage)()
    except StageError:
        raise
    except CtxAttrError as exc:
        if stage == "filter" or isinstance(exc, FilterEmptied):
            stage = "filter"
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    marker.unlink()
    return run.analysis
