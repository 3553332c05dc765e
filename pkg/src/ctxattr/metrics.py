"""Object/context volume attribution and the analysis tables built on it.

volume_attribution splits a non-negative map's total mass between object
(mask = 1) and context (mask = 0) pixels; the two fractions always sum to
one. The rest of the module aggregates those fractions and prediction
outcomes: group means, correctness splits, object-size strata, and the
per-variant accuracy table with context-change / context-perturbation
declines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    EmptyGroupError,
    MissingVariantError,
    ShapeError,
    ZeroAttributionError,
)
from .tensor import AttributionMap, BinaryMask, load_mask, object_fraction


@dataclass(frozen=True)
class VolumeAttribution:
    """Fractions of attribution mass on object vs context pixels."""

    v_object: float
    v_context: float

    def __post_init__(self):
        if self.v_object < 0.0 or self.v_context < 0.0:
            raise DomainError("volume fractions must be non-negative")
        if abs(self.v_object + self.v_context - 1.0) > 1e-9:
            raise DomainError(
                f"volume fractions must sum to 1, got "
                f"{self.v_object + self.v_context!r}"
            )


@dataclass(frozen=True)
class PredictionRecord:
    """One model decision on one (sample, variant); correctness is always
    re-derived from the classes, never trusted from input."""

    sample_id: str
    variant: str
    model_id: str
    predicted_class: int
    label_class: int
    score: float

    @property
    def correct(self) -> bool:
        return self.predicted_class == self.label_class


@dataclass(frozen=True)
class AccuracyTable:
    """Per-variant accuracies (percent) with context-change (CC) and
    context-perturbation (CP) means and declines from the original."""

    per_variant: dict
    orig_accuracy: float
    mean_cc: float | None
    mean_cp: float | None
    decline_cc: float | None
    decline_cp: float | None

    @classmethod
    def from_accuracies(
        cls,
        accuracies: dict,
        cc_variants: tuple,
        cp_variants: tuple,
        orig_variant: str = "original",
    ) -> "AccuracyTable":
        """Build the table from already-computed percent accuracies.

        An empty variant group yields None for its mean and decline (a
        group can legitimately be absent from a run's configuration).
        """
        for needed in (orig_variant, *cc_variants, *cp_variants):
            if needed not in accuracies:
                raise MissingVariantError(
                    f"variant {needed!r} missing from accuracies"
                )
        orig = float(accuracies[orig_variant])
        mean_cc = (
            float(np.mean([accuracies[v] for v in cc_variants]))
            if cc_variants else None
        )
        mean_cp = (
            float(np.mean([accuracies[v] for v in cp_variants]))
            if cp_variants else None
        )
        return cls(
            per_variant=dict(accuracies),
            orig_accuracy=orig,
            mean_cc=mean_cc,
            mean_cp=mean_cp,
            decline_cc=None if mean_cc is None else orig - mean_cc,
            decline_cp=None if mean_cp is None else orig - mean_cp,
        )


def volume_attribution(map_: AttributionMap, mask: BinaryMask) -> VolumeAttribution:
    """Split a map's mass: v_object over mask = 1, v_context over mask = 0.

    Sums accumulate in float64. An all-zero map has no defined split and
    raises instead of defaulting, so degenerate maps cannot silently bias
    group averages.
    """
    if (map_.height, map_.width) != (mask.height, mask.width):
        raise ShapeError(
            f"map ({map_.height}, {map_.width}) and mask "
            f"({mask.height}, {mask.width}) dimensions differ"
        )
    data = map_.data.astype(np.float64)
    if (data < 0.0).any():
        raise DomainError("attribution map contains negative entries")
    on_object = data[mask.data == 1].sum()
    off_object = data[mask.data == 0].sum()
    total = on_object + off_object
    if total == 0.0:
        raise ZeroAttributionError("attribution map sums to zero")
    # Each partition is summed on its own so a map supported entirely on
    # one side gives exactly 1.0 / 0.0 rather than 1 ± one ulp.
    return VolumeAttribution(
        v_object=on_object / total, v_context=off_object / total
    )


def aggregate(rows, keys) -> dict:
    """Mean v_object / v_context per group.

    rows are mappings that carry the grouping fields plus 'v_object' and
    'v_context'; keys is the tuple of field names to group by (an empty
    tuple means one global group). Reduction is (count, sum) merging, so
    any parallel partitioning of the rows gives identical results.
    """
    groups: dict = {}
    for row in rows:
        key = tuple(row[k] for k in keys)
        count, sum_o, sum_c = groups.get(key, (0, 0.0, 0.0))
        groups[key] = (
            count + 1,
            sum_o + float(row["v_object"]),
            sum_c + float(row["v_context"]),
        )
    if not groups:
        raise EmptyGroupError("nothing to aggregate")
    return {
        key: {
            "count": count,
            "v_object": sum_o / count,
            "v_context": sum_c / count,
        }
        for key, (count, sum_o, sum_c) in groups.items()
    }


def split_by_correctness(preds) -> tuple[list, list]:
    """Partition prediction records into (correct, wrong) by the derived
    correctness flag; disjoint and exhaustive."""
    correct = [p for p in preds if p.correct]
    wrong = [p for p in preds if not p.correct]
    return correct, wrong


def size_strata(mask: BinaryMask) -> str:
    """Stratum of the object's size: 'large' for 30-50% of the image,
    'small' below 20%, 'other' in between or above."""
    frac = object_fraction(mask)
    if 0.30 <= frac <= 0.50:
        return "large"
    if frac < 0.20:
        return "small"
    return "other"


def accuracy_table(
    preds,
    cc_variants: tuple,
    cp_variants: tuple,
    orig_variant: str = "original",
) -> AccuracyTable:
    """Per-variant percent accuracy plus CC/CP means and declines."""
    by_variant: dict = {}
    for p in preds:
        by_variant.setdefault(p.variant, []).append(p.correct)
    accuracies = {
        variant: 100.0 * float(np.mean(flags))
        for variant, flags in by_variant.items()
    }
    return AccuracyTable.from_accuracies(
        accuracies, cc_variants, cp_variants, orig_variant
    )


def context_fraction_filter(samples, threshold: float = 0.30, load=load_mask):
    """Keep samples whose context covers more than the threshold fraction.

    samples carry a mask_path; returns (kept, stats) where stats reports
    how much of the input survived.
    """
    samples = list(samples)
    kept = []
    for sample in samples:
        mask = load(sample.mask_path)
        if 1.0 - object_fraction(mask) > threshold:
            kept.append(sample)
    stats = {
        "total": len(samples),
        "kept": len(kept),
        "kept_fraction": len(kept) / len(samples) if samples else 0.0,
    }
    return kept, stats
