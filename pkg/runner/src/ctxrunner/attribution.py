"""CAM-style attribution over torch models, emitted in the map format.

Maps explain the model's own top-1 class per (sample, variant). The target
layer's activations and gradients are captured with hooks; convolutional
targets yield (C, h, w) grids directly, while transformer targets yield
token sequences (B, 1 + N, D) — the class token is dropped and the N patch
tokens are reshaped to their 2-D grid before the CAM weighting, since
patch tokens tile the image row-major.

Every map is bilinearly upsampled to the model input resolution, clamped
at zero (the downstream volume metric requires non-negative mass; the
clamp is recorded in each sidecar), and written atomically with a JSON
sidecar naming the method, resolved layer, and target class.

An unsupported method for the configured architecture aborts nothing: the
failure is reported per (sample, variant) record in the run summary, so a
sharded run's summary lines up with its record set.
"""

from __future__ import annotations

import math
from pathlib import Path

import torch
import torch.nn.functional as functional

from .config import RunnerConfig
from .errors import ConfigError
from .inference import shard_samples
from .interchange import (
    discover_variants,
    read_manifest,
    variant_image_path,
    write_attr_map,
    write_json,
)
from .inputs import batched, load_batch
from .models import load_model

SUPPORTED_METHODS = ("gradcam", "gradcam_pp")


class _LayerTap:
    """Captures a layer's forward activations and their gradients."""

    def __init__(self, module: torch.nn.Module, layer_name: str):
        try:
            target = module.get_submodule(layer_name)
        except AttributeError as exc:
            raise ConfigError(
                f"model has no layer {layer_name!r}: {exc}"
            ) from exc
        self.activations: torch.Tensor | None = None
        self.gradients: torch.Tensor | None = None
        self._handle = target.register_forward_hook(self._on_forward)

    def _on_forward(self, module, args, output):
        if not isinstance(output, torch.Tensor):
            raise ConfigError(
                f"target layer emits {type(output).__name__}, not a tensor"
            )
        self.activations = output
        output.register_hook(self._on_grad)

    def _on_grad(self, grad: torch.Tensor):
        self.gradients = grad

    def close(self):
        self._handle.remove()


def _as_grid(tensor: torch.Tensor) -> torch.Tensor:
    """Normalize captured activations/gradients to (B, C, h, w)."""
    if tensor.ndim == 4:
        return tensor
    if tensor.ndim == 3:
        tokens = tensor[:, 1:, :]
        count = tokens.shape[1]
        side = int(math.isqrt(count))
        if side * side != count:
            raise ConfigError(
                f"{count} patch tokens do not form a square grid"
            )
        return tokens.permute(0, 2, 1).reshape(
            tokens.shape[0], tokens.shape[2], side, side
        )
    raise ConfigError(
        f"target layer output has {tensor.ndim} dimensions; expected a "
        f"(B, C, h, w) feature map or a (B, tokens, dim) sequence"
    )


def _cam(method: str, acts: torch.Tensor, grads: torch.Tensor) -> torch.Tensor:
    """Channel-weighted map, (B, h, w), non-negative."""
    if method == "gradcam":
        weights = grads.mean(dim=(2, 3))
    else:  # gradcam_pp
        grads_sq = grads * grads
        denom = 2.0 * grads_sq + (
            acts * grads * grads_sq
        ).sum(dim=(2, 3), keepdim=True)
        alpha = grads_sq / torch.where(
            denom == 0.0, torch.ones_like(denom), denom
        )
        weights = (alpha * torch.relu(grads)).sum(dim=(2, 3))
    combined = torch.einsum("bc,bchw->bhw", weights, acts)
    return torch.relu(combined)


def run_attribution(config: RunnerConfig) -> dict:
    """Write one map + sidecar per (sample, variant); returns a summary."""
    samples = shard_samples(
        read_manifest(config.manifest), config.shard_index, config.shards
    )
    tags = discover_variants(config.variants)
    model_id, module, provenance = load_model(
        config.model, weights=config.weights, checkpoint=config.checkpoint,
        builder=config.builder, device=config.device,
    )
    layer_name = config.layer if config.layer else model_id.default_layer
    row_model_id = config.resolved_model_id()
    maps_dir = config.maps_dir()

    errors = []
    written = 0
    if config.method not in SUPPORTED_METHODS:
        reason = (
            f"method {config.method!r} is not supported for architecture "
            f"{model_id.name!r}; supported: {list(SUPPORTED_METHODS)}"
        )
        errors = [
            {"sample_id": s.sample_id, "variant": tag, "error": reason}
            for tag in tags for s in samples
        ]
    else:
        tap = _LayerTap(module, layer_name)
        try:
            for tag in tags:
                for chunk in batched(samples, config.batch_size):
                    paths = [
                        variant_image_path(config.variants, tag, s.sample_id)
                        for s in chunk
                    ]
                    batch = load_batch(
                        paths, model_id.preprocess, config.device
                    )
                    batch.requires_grad_(True)
                    logits = module(batch)
                    top1 = logits.argmax(dim=1)
                    module.zero_grad(set_to_none=True)
                    logits.gather(1, top1[:, None]).sum().backward()

                    acts = _as_grid(tap.activations.detach())
                    grads = _as_grid(tap.gradients)
                    maps = _cam(config.method, acts, grads)
                    resolution = model_id.resolution
                    upsampled = functional.interpolate(
                        maps[:, None], size=(resolution, resolution),
                        mode="bilinear", align_corners=False,
                    )[:, 0]
                    upsampled = upsampled.clamp(min=0.0)

                    for sample, klass, map_ in zip(
                        chunk, top1.tolist(), upsampled
                    ):
                        stem = maps_dir / tag / sample.sample_id
                        write_attr_map(
                            map_.detach().cpu().numpy(),
                            stem.with_suffix(".attr"),
                        )
                        write_json({
                            "model_id": row_model_id,
                            "method": config.method,
                            "target_layer": layer_name,
                            "target_class": klass,
                            "resolution": resolution,
                            "clamped_at_zero": True,
                        }, stem.with_suffix(".json"))
                        written += 1
        finally:
            tap.close()

    summary = {
        "maps_written": written,
        "errors": errors,
        "method": config.method,
        "target_layer": layer_name,
        "model_id": row_model_id,
        "variants": tags,
        "shard": {"index": config.shard_index, "of": config.shards},
        "provenance": provenance,
    }
    write_json(summary, Path(config.out) / "attribution.meta.json")
    return summary
