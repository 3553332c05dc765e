"""Image loading and preprocessing into model input batches."""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from .errors import MissingImageError
from .models import Preprocess


def load_input(path, preprocess: Preprocess) -> torch.Tensor:
    """Load one image as a (3, crop, crop) normalized float32 tensor.

    Shorter side resized to ``preprocess.resize`` (skipped when 0), center
    crop to the model resolution, scale to [0, 1], then per-channel
    mean/std normalization.
    """
    try:
        with Image.open(path) as handle:
            image = handle.convert("RGB")
    except OSError as exc:
        raise MissingImageError(f"cannot read image {path}: {exc}") from exc

    if preprocess.resize > 0:
        w, h = image.size
        scale = preprocess.resize / min(w, h)
        image = image.resize(
            (max(1, round(w * scale)), max(1, round(h * scale))),
            Image.Resampling.BILINEAR,
        )
    w, h = image.size
    crop = preprocess.crop
    if (w, h) != (crop, crop):
        if w < crop or h < crop:
            raise MissingImageError(
                f"image {path} is {w}x{h}, smaller than the {crop} crop; "
                f"set a resize"
            )
        left = (w - crop) // 2
        top = (h - crop) // 2
        image = image.crop((left, top, left + crop, top + crop))

    arr = np.asarray(image, dtype=np.float32) / 255.0
    mean = np.asarray(preprocess.mean, dtype=np.float32)
    std = np.asarray(preprocess.std, dtype=np.float32)
    arr = (arr - mean) / std
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def load_batch(paths, preprocess: Preprocess, device) -> torch.Tensor:
    tensors = [load_input(path, preprocess) for path in paths]
    return torch.stack(tensors).to(torch.device(device))


def batched(items: list, size: int):
    for start in range(0, len(items), size):
        yield items[start:start + size]
