"""Tiny deterministic torch models for the runner tests.

Each builder returns a (ModelId, module) pair and is importable as a
``builder`` spec (e.g. ``toymodels:build_tiny_cnn``). Weights are seeded,
so two builds are bit-identical and no downloads happen.
"""

import torch
from torch import nn
from torchvision.models import VisionTransformer

from ctxrunner.models import ModelId, Preprocess

# Variant tags the shared dataset fixture synthesizes and the tests consume.
TAGS = ("only_fg", "original")

RAW_PREPROCESS = Preprocess(
    resize=0, crop=32, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0)
)


class TinyCnn(nn.Module):
    def __init__(self, classes=3):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(8, 8, 3, padding=1, stride=2),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(8, classes)

    def forward(self, x):
        return self.fc(self.pool(self.features(x)).flatten(1))


class ColorProbe(nn.Module):
    """Six fixed logits over the RGB channel means: red peaks class 5,
    green class 2, blue class 4; classes 0/1/3 never win."""

    def __init__(self):
        super().__init__()
        self.head = nn.Linear(3, 6)
        weight = torch.tensor([
            [-1.0, -0.5, -0.5],
            [-0.5, -1.0, -0.5],
            [-1.0, 3.0, -1.0],
            [-0.5, -0.5, -1.0],
            [-1.0, -1.0, 3.0],
            [3.0, -1.0, -1.0],
        ])
        with torch.no_grad():
            self.head.weight.copy_(weight)
            self.head.bias.zero_()

    def forward(self, x):
        return self.head(x.mean(dim=(2, 3)))


def build_tiny_cnn():
    model_id = ModelId(
        name="tiny_cnn", weights=None, resolution=32,
        preprocess=RAW_PREPROCESS, default_layer="features",
    )
    with torch.random.fork_rng():
        torch.manual_seed(7)
        module = TinyCnn()
    return model_id, module


def build_color_probe():
    model_id = ModelId(
        name="color_probe", weights=None, resolution=32,
        preprocess=RAW_PREPROCESS, default_layer="head",
    )
    return model_id, ColorProbe()


def build_tiny_vit():
    model_id = ModelId(
        name="tiny_vit", weights=None, resolution=32,
        preprocess=RAW_PREPROCESS,
        default_layer="encoder.layers.encoder_layer_1.ln_1",
    )
    with torch.random.fork_rng():
        torch.manual_seed(5)
        module = VisionTransformer(
            image_size=32, patch_size=8, num_layers=2, num_heads=2,
            hidden_dim=32, mlp_dim=64, num_classes=3,
        )
        # torchvision zero-initializes the classification head; give it
        # weight so logits (and gradients) actually depend on the input.
        torch.nn.init.normal_(module.heads.head.weight, std=0.5)
        torch.nn.init.normal_(module.heads.head.bias, std=0.1)
    return model_id, module
