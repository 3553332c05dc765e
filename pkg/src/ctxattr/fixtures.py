"""Self-contained demo dataset: colored squares on textured backgrounds.

`build_fixture` writes a 16-sample tree (images/, masks/, manifest.jsonl,
network.json) whose object sizes span all three size strata and whose
class signal is the square's dominant color channel. `build_fixture_network`
returns a small hand-weighted CNN whose three conv filters each respond to
one dominant color, so predictions and attributions on the fixture are
meaningful rather than arbitrary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .engine import Conv2d, Dense, GlobalAvgPool, MaxPool, Network, ReLU, save_network
from .manifest import SampleRecord, write_manifest
from .tensor import BinaryMask, ImageTensor, save_image, save_mask

FIXTURE_CLASS_NAMES = ("red", "green", "blue")
FIXTURE_IMAGE_SIZE = 32

# (side, class_id, color) per sample; color None means the class base
# color. Side lengths are chosen so object fractions s^2/1024 cover large
# [0.30, 0.50], small (< 0.20), and other strata; the final 28px square
# leaves under 30% context so the default filter drops it. Two samples
# (s03, s08) wear a color that reads as a different class, so reports have
# wrong predictions to split on.
_FIXTURE_PLAN = (
    (18, 0, None), (20, 1, None), (22, 2, None),
    (18, 0, (0.30, 0.62, 0.22)), (20, 1, None), (22, 2, None),
    (8, 0, None), (10, 1, None), (12, 2, (0.62, 0.25, 0.30)),
    (14, 0, None), (12, 1, None),
    (16, 2, None), (16, 0, None), (16, 1, None), (16, 2, None),
    (28, 0, None),
)

_CLASS_COLORS = (
    (0.80, 0.10, 0.10),
    (0.10, 0.80, 0.10),
    (0.10, 0.10, 0.80),
)


def build_fixture_network() -> Network:
    """A 3-class CNN with hand-set weights: each 1x1 conv filter fires on
    one dominant color channel (weight 2 on its own channel, -1 on the
    others), so class k's logit tracks how much of the image is class-k
    colored."""
    weight = np.full((3, 3, 1, 1), -1.0)
    for k in range(3):
        weight[k, k, 0, 0] = 2.0
    bias = np.full(3, -0.05)
    size = FIXTURE_IMAGE_SIZE
    return Network(
        layers=[
            Conv2d(weight, bias, stride=1, padding="same"),
            ReLU(),
            MaxPool(2),
            GlobalAvgPool(),
            Dense(4.0 * np.eye(3), np.zeros(3)),
        ],
        class_count=3,
        input_shape=(3, size, size),
    )


def _textured_background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    luma = rng.uniform(0.30, 0.70, size=(h, w))
    jitter = rng.normal(0.0, 0.02, size=(3, h, w))
    return np.clip(luma[None, :, :] + jitter, 0.0, 1.0)


def _square_sample(rng: np.random.Generator, side: int, class_id: int,
                   size: int, color_override=None) -> tuple[ImageTensor, BinaryMask]:
    canvas = _textured_background(rng, size, size)
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    base = np.asarray(color_override if color_override is not None
                      else _CLASS_COLORS[class_id])
    jitter_scale = 0.02 if color_override is not None else 0.05
    color = np.clip(base + rng.uniform(-jitter_scale, jitter_scale, size=3), 0.0, 1.0)
    patch = color[:, None, None] + rng.normal(0.0, 0.03, size=(3, side, side))
    canvas[:, top:top + side, left:left + side] = np.clip(patch, 0.0, 1.0)
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[top:top + side, left:left + side] = 1
    return ImageTensor(canvas.astype(np.float32)), BinaryMask(mask)


def build_fixture(out_dir, seed: int = 2024) -> Path:
    """Write the demo dataset under out_dir and return the manifest path.

    Layout: images/sNN.png, masks/sNN.png, manifest.jsonl (paths relative
    to the manifest), network.json (the hand-weighted classifier).
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for idx, (side, class_id, color) in enumerate(_FIXTURE_PLAN):
        sample_id = f"s{idx:02d}"
        image, mask = _square_sample(rng, side, class_id, FIXTURE_IMAGE_SIZE, color)
        save_image(image, out_dir / "images" / f"{sample_id}.png")
        save_mask(mask, out_dir / "masks" / f"{sample_id}.png")
        records.append(SampleRecord(
            sample_id=sample_id,
            image_path=f"images/{sample_id}.png",
            mask_path=f"masks/{sample_id}.png",
            class_id=class_id,
            class_name=FIXTURE_CLASS_NAMES[class_id],
        ))
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(records, manifest_path)
    save_network(build_fixture_network(), out_dir / "network.json")
    return manifest_path
