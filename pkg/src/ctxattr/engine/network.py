"""Network assembly, forward/backward traces, and the gradient checker.

A Network is an immutable ordered stack of layers whose shapes are
chain-checked at construction. forward() captures every layer output;
backward() computes exact reverse-mode gradients of one logit w.r.t. the
input, every layer output, and every bias vector.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IoError, FormatError, ShapeError
from .layers import (
    LAYER_KINDS,
    AvgPool,
    Conv2d,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool,
    ReLU,
)


class _Instrumentation:
    """Process-wide counters used by structural tests (e.g. proving a
    method never invoked the backward pass)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.backward_calls = 0

    def record_backward(self):
        with self._lock:
            self.backward_calls += 1


instrumentation = _Instrumentation()


@dataclass(frozen=True)
class Network:
    layers: tuple
    class_count: int
    input_shape: tuple
    out_shapes: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        shapes = []
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
            shapes.append(tuple(shape))
        if shape != (self.class_count,):
            raise ShapeError(
                f"final layer produces {shape}, expected ({self.class_count},) logits"
            )
        object.__setattr__(self, "out_shapes", tuple(shapes))

    def spatial_layers(self) -> list[int]:
        """Indices of layers whose output is a (C, H, W) activation stack."""
        return [i for i, s in enumerate(self.out_shapes) if len(s) == 3]

    def last_spatial_layer(self) -> int:
        spatial = self.spatial_layers()
        if not spatial:
            raise ShapeError("network has no spatial layer")
        return spatial[-1]


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer output activations; the last entry is the logit vector."""

    outputs: tuple

    @property
    def logits(self) -> np.ndarray:
        return self.outputs[-1]


@dataclass(frozen=True)
class BackwardTrace:
    """Gradients of one logit: w.r.t. the input, every layer output, and
    every bias vector (keyed by layer index; biased layers only)."""

    class_idx: int
    input_grad: np.ndarray
    activation_grads: tuple
    bias_grads: dict


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != net.input_shape:
        raise ShapeError(f"input shape {x.shape} != network {net.input_shape}")
    outputs = []
    cur = x
    for layer in net.layers:
        cur = layer.forward(cur)
        outputs.append(cur)
    return outputs[-1], ForwardTrace(tuple(outputs))


def backward(
    net: Network,
    x: np.ndarray,
    trace: ForwardTrace,
    class_idx: int,
    guided: bool = False,
) -> BackwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= class_idx < net.class_count:
        raise IndexError(f"class_idx {class_idx} out of range [0, {net.class_count})")
    if len(trace.outputs) != len(net.layers):
        raise ShapeError("trace does not match network depth")
    for out, shape in zip(trace.outputs, net.out_shapes):
        if out.shape != shape:
            raise ShapeError("trace shapes do not match network shapes")
    instrumentation.record_backward()

    inputs = (x,) + trace.outputs[:-1]
    grad = np.zeros(net.class_count, dtype=np.float64)
    grad[class_idx] = 1.0

    activation_grads: list = [None] * len(net.layers)
    bias_grads: dict = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        activation_grads[i] = grad
        if layer.has_bias:
            bias_grads[i] = layer.bias_grad(grad)
        grad = layer.backward(inputs[i], grad, guided=guided)
    return BackwardTrace(
        class_idx=class_idx,
        input_grad=grad,
        activation_grads=tuple(activation_grads),
        bias_grads=bias_grads,
    )


def _activation_pattern(net: Network, trace: ForwardTrace, x: np.ndarray):
    """Discrete decisions made during the forward pass: ReLU on/off signs
    and MaxPool winner indices. Used to detect kink crossings."""
    inputs = (x,) + trace.outputs[:-1]
    pattern = []
    for layer, inp in zip(net.layers, inputs):
        if isinstance(layer, ReLU):
            pattern.append(inp > 0)
        elif isinstance(layer, MaxPool):
            pattern.append(layer.argmax(inp))
    return pattern


def grad_check(
    net: Network,
    x: np.ndarray,
    class_idx: int,
    n_coords: int = 64,
    step: float = 1e-3,
    seed: int = 0,
) -> float:
    """Worst relative error of reverse-mode vs central finite differences.

    Probes a random sample of input coordinates (all of them when the
    input is small). A coordinate is skipped when the two perturbed
    forward passes make different discrete decisions (a ReLU sign flip or
    MaxPool winner change), i.e. the secant crosses a non-differentiable
    point and the comparison is meaningless there.
    """
    x = np.asarray(x, dtype=np.float64)
    _, trace = forward(net, x)
    analytic = backward(net, x, trace, class_idx).input_grad

    flat = x.size
    rng = np.random.default_rng(seed)
    if flat <= n_coords:
        coords = np.arange(flat)
    else:
        coords = rng.choice(flat, size=n_coords, replace=False)

    worst = 0.0
    for c in coords:
        xp = x.copy().reshape(-1)
        xp[c] += step
        xm = x.copy().reshape(-1)
        xm[c] -= step
        lp, tp = forward(net, xp.reshape(x.shape))
        lm, tm = forward(net, xm.reshape(x.shape))
        pat_p = _activation_pattern(net, tp, xp.reshape(x.shape))
        pat_m = _activation_pattern(net, tm, xm.reshape(x.shape))
        if any(not np.array_equal(a, b) for a, b in zip(pat_p, pat_m)):
            continue
        numeric = (lp[class_idx] - lm[class_idx]) / (2.0 * step)
        a = analytic.reshape(-1)[c]
        denom = max(abs(a), abs(numeric), 1e-6)
        worst = max(worst, abs(a - numeric) / denom)
    return worst


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


# --- JSON serialization -----------------------------------------------------


def _layer_to_json(layer) -> dict:
    doc: dict = {"kind": layer.kind}
    if isinstance(layer, Conv2d):
        doc["stride"] = layer.stride
        doc["padding"] = layer.padding
        doc["weight"] = layer.weight.tolist()
        if layer.bias is not None:
            doc["bias"] = layer.bias.tolist()
    elif isinstance(layer, (MaxPool, AvgPool)):
        doc["kernel"] = layer.kernel
        doc["stride"] = layer.stride
    elif isinstance(layer, Dense):
        doc["weight"] = layer.weight.tolist()
        if layer.bias is not None:
            doc["bias"] = layer.bias.tolist()
    return doc


def _layer_from_json(doc: dict):
    kind = doc.get("kind")
    if kind not in LAYER_KINDS:
        raise FormatError(f"unknown layer kind {kind!r}")
    if kind == "conv2d":
        return Conv2d(
            np.asarray(doc["weight"], dtype=np.float64),
            bias=None if "bias" not in doc else np.asarray(doc["bias"], dtype=np.float64),
            stride=doc.get("stride", 1),
            padding=doc.get("padding", "same"),
        )
    if kind == "dense":
        return Dense(
            np.asarray(doc["weight"], dtype=np.float64),
            bias=None if "bias" not in doc else np.asarray(doc["bias"], dtype=np.float64),
        )
    if kind == "max_pool":
        return MaxPool(doc["kernel"], doc.get("stride"))
    if kind == "avg_pool":
        return AvgPool(doc["kernel"], doc.get("stride"))
    return LAYER_KINDS[kind]()


def network_to_json(net: Network) -> dict:
    return {
        "class_count": net.class_count,
        "input_shape": list(net.input_shape),
        "layers": [_layer_to_json(layer) for layer in net.layers],
    }


def network_from_json(doc: dict) -> Network:
    try:
        layers = tuple(_layer_from_json(d) for d in doc["layers"])
        return Network(
            layers=layers,
            class_count=int(doc["class_count"]),
            input_shape=tuple(int(d) for d in doc["input_shape"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad network document: {exc}") from exc


def save_network(net: Network, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(network_to_json(net), indent=1) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_network(path) -> Network:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    return network_from_json(doc)
