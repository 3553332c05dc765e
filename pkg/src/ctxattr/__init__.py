"""Object-vs-context analysis of feature attributions.

The toolkit synthesizes context variants of masked images (background
swaps, no-information backgrounds, context-only corruptions), runs a small
built-in CNN engine or ingests external predictions and attribution maps,
and reports how a classifier's accuracy and attribution mass shift when
the context changes: per-variant accuracy with context-change and
context-perturbation declines, and object/context volume attribution
aggregated overall, by prediction correctness, and by object-size strata.
"""

from .attribution import (
    CAM_FAMILY,
    GUIDED_REDUCTIONS,
    METHOD_KINDS,
    MethodSpec,
    attribute,
    fullgrad,
    fullgrad_decomposition,
    gradcam,
    gradcam_pp,
    guided_backprop,
    method_metadata,
    normalized,
    resolve_target_layer,
    scorecam,
)
from .engine import load_network, save_network
from .errors import (
    CtxAttrError,
    DecodeError,
    DomainError,
    EmptyGroupError,
    FilterEmptied,
    FormatError,
    IoError,
    LayerKindError,
    ManifestError,
    MissingMapError,
    MissingVariantError,
    OrphanRecordError,
    ParamError,
    PoolError,
    SchemaError,
    ShapeError,
    StageError,
    ZeroAttributionError,
)
from .fixtures import build_fixture, build_fixture_network
from .manifest import SampleRecord, read_manifest, validate_manifest, write_manifest
from .metrics import (
    AccuracyTable,
    PredictionRecord,
    VolumeAttribution,
    accuracy_table,
    aggregate,
    context_fraction_filter,
    size_strata,
    split_by_correctness,
    volume_attribution,
)
from .pipeline import (
    CC_TAGS,
    NO_INFO_TAGS,
    RunConfig,
    default_variants,
    ingest_external,
    parse_variant_tag,
    run_pipeline,
)
from .synthesis import (
    CORRUPTION_KINDS,
    MIXED_KINDS,
    VARIANT_KINDS,
    CorruptionSpec,
    VariantSpec,
    apply_variant,
    corrupt_context,
    derive_seed,
    make_donor_background,
    mixed_composite,
    noise_background,
    only_fg,
    pick_donor,
)
from .tensor import (
    AttributionMap,
    BinaryMask,
    ImageTensor,
    context_fraction,
    load_image,
    load_mask,
    object_fraction,
    read_attr_map,
    resize_bilinear,
    save_image,
    save_mask,
    write_attr_map,
)

__version__ = "0.1.0"
