"""Model runner: pretrained classifiers + CAM attribution over variant
directories, emitting the predictions JSONL and binary map interchange
formats consumed by the analysis toolkit."""

from .attribution import SUPPORTED_METHODS, run_attribution
from .config import RunnerConfig, make_config, read_config_file
from .errors import (
    ConfigError,
    ManifestError,
    MappingError,
    MissingImageError,
    ModelLoadError,
    RunnerError,
)
from .inference import UNMAPPED_CLASS, load_superclass_map, run_inference
from .interchange import (
    ATTR_MAGIC,
    ATTR_VERSION,
    MANIFEST_FIELDS,
    PREDICTION_FIELDS,
    Sample,
    discover_variants,
    read_manifest,
    write_attr_map,
    write_predictions,
)
from .models import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    REGISTRY,
    ModelId,
    Preprocess,
    get_model_id,
    load_model,
    register_model,
    weights_digest,
)

__version__ = "0.1.0"

__all__ = [
    "ATTR_MAGIC",
    "ATTR_VERSION",
    "ConfigError",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "MANIFEST_FIELDS",
    "ManifestError",
    "MappingError",
    "MissingImageError",
    "ModelId",
    "ModelLoadError",
    "PREDICTION_FIELDS",
    "Preprocess",
    "REGISTRY",
    "RunnerConfig",
    "RunnerError",
    "SUPPORTED_METHODS",
    "Sample",
    "UNMAPPED_CLASS",
    "discover_variants",
    "get_model_id",
    "load_model",
    "load_superclass_map",
    "make_config",
    "read_config_file",
    "read_manifest",
    "register_model",
    "run_attribution",
    "run_inference",
    "weights_digest",
    "write_attr_map",
    "write_predictions",
]
