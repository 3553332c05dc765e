"""Feature-attribution methods over the bundled engine.

Five methods share one contract: given a network, an input image, and a
class index they return a non-negative AttributionMap in the input frame.

* gradcam        — channel weights = spatial mean of the logit gradient.
* gradcam_pp     — per-position weights from the closed-form second/third
                   gradient powers of an exponentiated score.
* guided_backprop — input gradient under the guided-ReLU rule, reduced
                   over channels, negatives clamped.
* fullgrad       — input-gradient term plus per-layer bias-gradient
                   terms; exact completeness on the raw decomposition.
* scorecam       — activation-masked forward passes only; never invokes
                   the backward pass.

attribute() dispatches on a MethodSpec; method_metadata() describes the
exact variant choices for the sidecar written next to each map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Network, backward, forward, softmax
from .errors import LayerKindError, ParamError
from .tensor import AttributionMap, ImageTensor, resize_bilinear_array

METHOD_KINDS = ("gradcam", "gradcam_pp", "guided_backprop", "fullgrad", "scorecam")
CAM_FAMILY = ("gradcam", "gradcam_pp", "scorecam")
GUIDED_REDUCTIONS = ("max", "mean")


@dataclass(frozen=True)
class MethodSpec:
    """Which method to run and its postprocess choices.

    target_layer applies to the CAM family only; None selects the last
    layer with a (C, H, W) output. guided_reduction picks how the guided
    input gradient collapses its color channels.
    """

    kind: str
    target_layer: int | None = None
    guided_reduction: str = "max"

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ParamError(
                f"unknown method {self.kind!r}; expected one of {METHOD_KINDS}"
            )
        if self.guided_reduction not in GUIDED_REDUCTIONS:
            raise ParamError(
                f"unknown channel reduction {self.guided_reduction!r}; "
                f"expected one of {GUIDED_REDUCTIONS}"
            )


def _as_input(net: Network, x) -> np.ndarray:
    if isinstance(x, ImageTensor):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def _check_class(net: Network, class_idx: int) -> None:
    if not 0 <= class_idx < net.class_count:
        raise IndexError(
            f"class_idx {class_idx} out of range [0, {net.class_count})"
        )


def resolve_target_layer(net: Network, target_layer: int | None) -> int:
    """Validate a CAM target layer, defaulting to the last spatial one."""
    if target_layer is None:
        return net.last_spatial_layer()
    if not 0 <= target_layer < len(net.layers):
        raise LayerKindError(
            f"target layer {target_layer} out of range [0, {len(net.layers)})"
        )
    if len(net.out_shapes[target_layer]) != 3:
        raise LayerKindError(
            f"target layer {target_layer} ({net.layers[target_layer].kind}) "
            f"yields shape {net.out_shapes[target_layer]}, need a (C, H, W) "
            "activation stack"
        )
    return target_layer


def _to_input_frame(net: Network, arr: np.ndarray) -> AttributionMap:
    """Resize a non-negative 2-D array to the network's input frame."""
    in_h, in_w = net.input_shape[1], net.input_shape[2]
    out = resize_bilinear_array(arr, in_h, in_w) if arr.shape != (in_h, in_w) else arr
    return AttributionMap(np.asarray(out, dtype=np.float32))


def normalized(map_: AttributionMap) -> AttributionMap:
    """Scale a map so its maximum is 1 (all-zero maps pass through)."""
    peak = float(map_.data.max())
    if peak == 0.0:
        return map_
    return AttributionMap(map_.data / np.float32(peak))


def gradcam(
    net: Network, x, class_idx: int, target_layer: int | None = None
) -> AttributionMap:
    """Weighted activation map with channel weights = mean logit gradient."""
    x = _as_input(net, x)
    _check_class(net, class_idx)
    _, trace = forward(net, x)
    layer_idx = resolve_target_layer(net, target_layer)
    acts = trace.outputs[layer_idx]
    grads = backward(net, x, trace, class_idx).activation_grads[layer_idx]
    alpha = grads.mean(axis=(1, 2))
    cam = np.maximum((alpha[:, None, None] * acts).sum(axis=0), 0.0)
    return _to_input_frame(net, cam)


def gradcam_pp(
    net: Network, x, class_idx: int, target_layer: int | None = None
) -> AttributionMap:
    """Per-position channel weights from the exponential-score closed form.

    With g the logit gradient at the target layer,
    alpha_kij = g_ij^2 / (2 g_ij^2 + (sum_ab A_ab^k) g_ij^3), zero where the
    denominator vanishes; w_k = sum_ij alpha_kij * relu(g_ij).

    The gradient is first scaled by its maximum magnitude: the closed form
    is not homogeneous in g, so without this the map would depend on the
    arbitrary scale of the logit. With it, positive rescaling of the class
    score leaves the normalized map unchanged.
    """
    x = _as_input(net, x)
    _check_class(net, class_idx)
    _, trace = forward(net, x)
    layer_idx = resolve_target_layer(net, target_layer)
    acts = trace.outputs[layer_idx]
    g = backward(net, x, trace, class_idx).activation_grads[layer_idx]
    peak = np.abs(g).max()
    if peak > 0.0:
        g = g / peak
    g2 = g * g
    g3 = g2 * g
    act_sum = acts.sum(axis=(1, 2))
    denom = 2.0 * g2 + act_sum[:, None, None] * g3
    alpha = np.divide(g2, denom, out=np.zeros_like(g2), where=denom != 0.0)
    weights = (alpha * np.maximum(g, 0.0)).sum(axis=(1, 2))
    cam = np.maximum((weights[:, None, None] * acts).sum(axis=0), 0.0)
    return _to_input_frame(net, cam)


def guided_gradient(net: Network, x, class_idx: int) -> np.ndarray:
    """Raw input gradient under the guided-ReLU backward rule."""
    x = _as_input(net, x)
    _check_class(net, class_idx)
    _, trace = forward(net, x)
    return backward(net, x, trace, class_idx, guided=True).input_grad


def guided_backprop(
    net: Network, x, class_idx: int, reduction: str = "max"
) -> AttributionMap:
    """Guided input gradient, channel-reduced, negatives clamped to zero."""
    if reduction not in GUIDED_REDUCTIONS:
        raise ParamError(
            f"unknown channel reduction {reduction!r}; "
            f"expected one of {GUIDED_REDUCTIONS}"
        )
    raw = guided_gradient(net, x, class_idx)
    if raw.ndim == 3:
        reduced = raw.max(axis=0) if reduction == "max" else raw.mean(axis=0)
    elif raw.ndim == 2:
        reduced = raw
    else:
        reduced = raw.reshape(1, -1)
    return AttributionMap(np.maximum(reduced, 0.0).astype(np.float32))


def fullgrad_decomposition(net: Network, x, class_idx: int):
    """Exact decomposition logit = sum(input term) + sum(bias terms).

    Returns (logit, input_term, bias_terms) where input_term is
    input_gradient * input (input-shaped) and bias_terms maps each biased
    layer index to its output-gradient * broadcast-bias array. The three
    pieces satisfy the completeness identity for the engine's
    piecewise-linear layer kinds.
    """
    x = _as_input(net, x)
    _check_class(net, class_idx)
    logits, trace = forward(net, x)
    bt = backward(net, x, trace, class_idx)
    input_term = bt.input_grad * x
    bias_terms = {}
    for i, layer in enumerate(net.layers):
        if not layer.has_bias:
            continue
        gout = bt.activation_grads[i]
        if gout.ndim == 3:
            bias_terms[i] = gout * layer.bias[:, None, None]
        else:
            bias_terms[i] = gout * layer.bias
    return float(logits[class_idx]), input_term, bias_terms


def _min_max(arr: np.ndarray) -> np.ndarray:
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def fullgrad(net: Network, x, class_idx: int) -> AttributionMap:
    """Aggregate of postprocessed input-gradient and bias-gradient terms.

    Each component is passed through psi = absolute value, resized per
    channel to the input frame, min-max normalized as a whole, and its
    channels summed. Bias components without a spatial grid (dense
    layers) contribute to the completeness identity but cannot be
    localized, so they do not enter the map.
    """
    _, input_term, bias_terms = fullgrad_decomposition(net, x, class_idx)
    if input_term.ndim != 3:
        raise LayerKindError(
            f"map needs a (C, H, W) input network, got input shape "
            f"{net.input_shape}"
        )
    in_h, in_w = net.input_shape[1], net.input_shape[2]

    def component(arr3: np.ndarray) -> np.ndarray:
        planes = np.abs(arr3)
        if planes.shape[1:] != (in_h, in_w):
            planes = np.stack(
                [resize_bilinear_array(p, in_h, in_w) for p in planes]
            )
        return _min_max(planes).sum(axis=0)

    total = component(input_term)
    for idx in sorted(bias_terms):
        if bias_terms[idx].ndim == 3:
            total = total + component(bias_terms[idx])
    return AttributionMap(total.astype(np.float32))


def scorecam(
    net: Network, x, class_idx: int, target_layer: int | None = None
) -> AttributionMap:
    """Activation-masked scoring; computed entirely from forward passes.

    Each channel's activation map is upsampled to the input frame,
    min-max normalized (constant channels are skipped with weight 0), and
    multiplied into the input. The channel weight is the class softmax
    probability on that masked input minus the probability on an all-zero
    input.
    """
    x = _as_input(net, x)
    _check_class(net, class_idx)
    _, trace = forward(net, x)
    layer_idx = resolve_target_layer(net, target_layer)
    acts = trace.outputs[layer_idx]
    in_h, in_w = net.input_shape[1], net.input_shape[2]

    base_logits, _ = forward(net, np.zeros_like(x))
    base_prob = softmax(base_logits)[class_idx]

    weights = np.zeros(acts.shape[0], dtype=np.float64)
    for k in range(acts.shape[0]):
        up = resize_bilinear_array(acts[k], in_h, in_w)
        lo = up.min()
        hi = up.max()
        if hi == lo:
            continue
        mask = (up - lo) / (hi - lo)
        logits, _ = forward(net, x * mask[None, :, :])
        weights[k] = softmax(logits)[class_idx] - base_prob

    cam = np.maximum((weights[:, None, None] * acts).sum(axis=0), 0.0)
    return _to_input_frame(net, cam)


def attribute(spec: MethodSpec, net: Network, x, class_idx: int) -> AttributionMap:
    """Run the method named by spec; output is input-sized and >= 0."""
    if spec.kind == "gradcam":
        return gradcam(net, x, class_idx, spec.target_layer)
    if spec.kind == "gradcam_pp":
        return gradcam_pp(net, x, class_idx, spec.target_layer)
    if spec.kind == "guided_backprop":
        return guided_backprop(net, x, class_idx, spec.guided_reduction)
    if spec.kind == "fullgrad":
        return fullgrad(net, x, class_idx)
    if spec.kind == "scorecam":
        return scorecam(net, x, class_idx, spec.target_layer)
    raise ParamError(f"unknown method {spec.kind!r}")


def method_metadata(spec: MethodSpec, net: Network, class_idx: int) -> dict:
    """Sidecar payload describing exactly how a map was produced."""
    doc: dict = {"method": spec.kind, "class_idx": class_idx}
    if spec.kind in CAM_FAMILY:
        doc["target_layer"] = resolve_target_layer(net, spec.target_layer)
    if spec.kind == "gradcam_pp":
        doc["gradient_scale"] = "max-abs-normalized"
    if spec.kind == "scorecam":
        doc["score"] = "softmax"
        doc["baseline"] = "zero-input"
    if spec.kind == "guided_backprop":
        doc["channel_reduction"] = spec.guided_reduction
        doc["negative_clamp"] = True
    if spec.kind == "fullgrad":
        doc["postprocess"] = "abs-minmax-per-component"
        doc["spatial_bias_terms_only"] = True
    return doc
