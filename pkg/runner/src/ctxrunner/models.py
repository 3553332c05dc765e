"""Model registry, loading, and preprocessing.

A ModelId names an architecture together with everything needed to
reproduce its inputs: the weights tag, the input resolution, and the
resize/crop/normalization recipe. All of it — plus a SHA-256 over the
resolved weights — is recorded in the output provenance, so a consumer of
the emitted files can tell exactly which model produced them.

Three ways to obtain weights, in priority order:

* ``builder`` (``"module:function"``): import and call a function returning
  either a ``torch.nn.Module`` or a ``(ModelId, module)`` pair — the hook
  for custom architectures and for tests.
* ``checkpoint``: a local ``state_dict`` file loaded into the architecture.
* ``weights``: a torchvision weights tag (e.g. ``"DEFAULT"``); the special
  tag ``"none"`` means seeded random initialization (smoke tests only).
"""

from __future__ import annotations

import hashlib
import importlib
from dataclasses import asdict, dataclass

import torch

from .errors import ConfigError, ModelLoadError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class Preprocess:
    """Input recipe: shorter-side resize (0 = skip), center crop to the
    model resolution, then per-channel normalization."""

    resize: int
    crop: int
    mean: tuple
    std: tuple

    def __post_init__(self):
        if self.crop <= 0:
            raise ConfigError("crop must be positive")
        if self.resize < 0:
            raise ConfigError("resize must be zero or positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ConfigError("mean and std must have three channels")

    def describe(self) -> dict:
        doc = asdict(self)
        doc["mean"] = list(self.mean)
        doc["std"] = list(self.std)
        return doc


@dataclass(frozen=True)
class ModelId:
    """An architecture plus the full recipe for reproducing its inputs."""

    name: str
    weights: str | None
    resolution: int
    preprocess: Preprocess
    default_layer: str

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if self.preprocess.crop != self.resolution:
            raise ConfigError(
                f"preprocess crop {self.preprocess.crop} must equal the "
                f"model resolution {self.resolution}"
            )


def _imagenet_model(name: str, default_layer: str) -> ModelId:
    return ModelId(
        name=name,
        weights="DEFAULT",
        resolution=224,
        preprocess=Preprocess(256, 224, IMAGENET_MEAN, IMAGENET_STD),
        default_layer=default_layer,
    )


REGISTRY: dict[str, ModelId] = {
    "resnet50": _imagenet_model("resnet50", "layer4"),
    "resnet101": _imagenet_model("resnet101", "layer4"),
    "efficientnet_b0": _imagenet_model("efficientnet_b0", "features"),
    # The last block's pre-attention LayerNorm: at the block's *output*
    # the class head gives patch tokens exactly zero gradient (only the
    # class token feeds the logits), so CAM weights would vanish. Before
    # the final attention, gradients reach every patch token.
    "vit_b_16": _imagenet_model(
        "vit_b_16", "encoder.layers.encoder_layer_11.ln_1"
    ),
}

_CUSTOM: dict[str, tuple[ModelId, object]] = {}


def register_model(model_id: ModelId, builder) -> None:
    """Register an in-process custom model; builder() -> torch.nn.Module."""
    _CUSTOM[model_id.name] = (model_id, builder)


def get_model_id(name: str) -> ModelId:
    if name in _CUSTOM:
        return _CUSTOM[name][0]
    if name in REGISTRY:
        return REGISTRY[name]
    raise ModelLoadError(
        f"unknown model {name!r}; known: "
        f"{sorted(set(REGISTRY) | set(_CUSTOM))}"
    )


def weights_digest(module: torch.nn.Module) -> str:
    """SHA-256 over the state dict (names + tensor bytes, sorted)."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        digest.update(key.encode())
        tensor = state[key]
        digest.update(
            tensor.detach().cpu().contiguous().numpy().tobytes()
        )
    return digest.hexdigest()


def _resolve_builder(spec: str):
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ConfigError(
            f"builder must look like 'module:function', got {spec!r}"
        )
    try:
        module = importlib.import_module(module_name)
        return getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise ModelLoadError(f"cannot import builder {spec!r}: {exc}") from exc


def load_model(
    name: str,
    weights: str | None = None,
    checkpoint: str | None = None,
    builder: str | None = None,
    device: str = "cpu",
) -> tuple[ModelId, torch.nn.Module, dict]:
    """Resolve and load a model in eval mode.

    Returns (model_id, module, provenance); provenance carries the weight
    source, its SHA-256, the preprocessing recipe, and library versions.
    """
    if builder is not None:
        built = _resolve_builder(builder)()
        if isinstance(built, tuple):
            model_id, module = built
        else:
            model_id, module = get_model_id(name), built
        source = f"builder:{builder}"
    elif name in _CUSTOM:
        model_id, make = _CUSTOM[name]
        module = make()
        source = f"builder:{name}"
    else:
        model_id = get_model_id(name)
        tag = weights if weights is not None else model_id.weights
        import torchvision.models

        if checkpoint is not None:
            module = torchvision.models.get_model(model_id.name, weights=None)
            try:
                state = torch.load(checkpoint, map_location="cpu",
                                   weights_only=True)
            except (OSError, RuntimeError, ValueError) as exc:
                raise ModelLoadError(
                    f"cannot load checkpoint {checkpoint}: {exc}"
                ) from exc
            module.load_state_dict(state)
            source = f"checkpoint:{checkpoint}"
        elif tag == "none":
            # Seeded random initialization: deterministic, for smoke tests.
            with torch.random.fork_rng():
                torch.manual_seed(0)
                module = torchvision.models.get_model(
                    model_id.name, weights=None
                )
            source = "random-init:seed0"
        else:
            try:
                module = torchvision.models.get_model(
                    model_id.name, weights=tag
                )
            except (ValueError, RuntimeError, OSError) as exc:
                raise ModelLoadError(
                    f"cannot resolve weights {tag!r} for "
                    f"{model_id.name!r}: {exc}"
                ) from exc
            source = f"torchvision:{tag}"

    module = module.to(torch.device(device))
    module.eval()
    for param in module.parameters():
        param.requires_grad_(False)

    import torchvision

    provenance = {
        "model": model_id.name,
        "weights_source": source,
        "weights_sha256": weights_digest(module),
        "resolution": model_id.resolution,
        "preprocess": model_id.preprocess.describe(),
        "device": device,
        "torch": torch.__version__,
        "torchvision": torchvision.__version__,
    }
    return model_id, module, provenance
