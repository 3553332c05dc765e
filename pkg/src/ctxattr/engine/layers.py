"""Layer kernels for the desk-scale CNN engine.

Single-sample, float64 throughout. Each layer exposes:

* ``out_shape(in_shape)`` for static chain-checking,
* ``forward(x)``,
* ``backward(x, gy, guided=False)`` returning the gradient w.r.t. the
  layer input (``guided`` only changes ReLU),
* ``bias_grad(gy)`` on biased layers.

Spatial arrays are (C, H, W); dense vectors are 1-D.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _require_spatial(shape, kind: str):
    if len(shape) != 3:
        raise ShapeError(f"{kind} needs a (C, H, W) input, got {shape}")


class Conv2d:
    """2-D cross-correlation with optional bias.

    Padding "same" zero-pads so the output spans ceil(in/stride), with any
    odd padding placed on the bottom/right; "valid" uses no padding.
    """

    kind = "conv2d"

    def __init__(self, weight, bias=None, stride: int = 1, padding: str = "same"):
        self.weight = _freeze(np.asarray(weight))
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be 4-D, got {self.weight.shape}")
        if stride < 1:
            raise ShapeError(f"conv stride must be >= 1, got {stride}")
        if padding not in ("same", "valid"):
            raise ShapeError(f"conv padding must be same/valid, got {padding!r}")
        self.bias = None if bias is None else _freeze(np.asarray(bias))
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} output channels"
            )
        self.stride = int(stride)
        self.padding = padding

    @property
    def has_bias(self) -> bool:
        return self.bias is not None

    def _pads(self, in_h: int, in_w: int):
        _, _, kh, kw = self.weight.shape
        s = self.stride
        if self.padding == "same":
            out_h = -(-in_h // s)
            out_w = -(-in_w // s)
            pad_h = max((out_h - 1) * s + kh - in_h, 0)
            pad_w = max((out_w - 1) * s + kw - in_w, 0)
            top, left = pad_h // 2, pad_w // 2
            return out_h, out_w, top, pad_h - top, left, pad_w - left
        if in_h < kh or in_w < kw:
            raise ShapeError(
                f"valid conv kernel {kh}x{kw} exceeds input {in_h}x{in_w}"
            )
        return (in_h - kh) // s + 1, (in_w - kw) // s + 1, 0, 0, 0, 0

    def out_shape(self, in_shape):
        _require_spatial(in_shape, "conv2d")
        c_out, c_in, _, _ = self.weight.shape
        if in_shape[0] != c_in:
            raise ShapeError(
                f"conv expects {c_in} input channels, got {in_shape[0]}"
            )
        out_h, out_w, *_ = self._pads(in_shape[1], in_shape[2])
        return (c_out, out_h, out_w)

    def forward(self, x: np.ndarray) -> np.ndarray:
        _, _, kh, kw = self.weight.shape
        s = self.stride
        out_h, out_w, top, bottom, left, right = self._pads(x.shape[1], x.shape[2])
        xp = np.pad(x, ((0, 0), (top, bottom), (left, right)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
        y = np.einsum("oikl,ihwkl->ohw", self.weight, win, optimize=True)
        if self.bias is not None:
            y += self.bias[:, None, None]
        return y

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        _, _, kh, kw = self.weight.shape
        s = self.stride
        out_h, out_w, top, bottom, left, right = self._pads(x.shape[1], x.shape[2])
        padded_shape = (x.shape[0], x.shape[1] + top + bottom, x.shape[2] + left + right)
        gxp = np.zeros(padded_shape, dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(self.weight[:, :, i, j], gy, axes=([0], [0]))
                gxp[:, i : i + s * out_h : s, j : j + s * out_w : s] += contrib
        return gxp[:, top : top + x.shape[1], left : left + x.shape[2]]

    def bias_grad(self, gy: np.ndarray) -> np.ndarray:
        return gy.sum(axis=(1, 2))


class ReLU:
    kind = "relu"
    has_bias = False

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        # derivative at exactly 0 follows the x > 0 convention
        gx = gy * (x > 0)
        if guided:
            gx = gx * (gy > 0)
        return gx


class _Pool:
    has_bias = False

    def __init__(self, kernel: int, stride: int | None = None):
        if kernel < 1:
            raise ShapeError(f"pool kernel must be >= 1, got {kernel}")
        self.kernel = int(kernel)
        self.stride = self.kernel if stride is None else int(stride)
        if self.stride < 1:
            raise ShapeError(f"pool stride must be >= 1, got {self.stride}")

    def out_shape(self, in_shape):
        _require_spatial(in_shape, self.kind)
        k, s = self.kernel, self.stride
        if in_shape[1] < k or in_shape[2] < k:
            raise ShapeError(
                f"{self.kind} kernel {k} exceeds input {in_shape[1]}x{in_shape[2]}"
            )
        return (in_shape[0], (in_shape[1] - k) // s + 1, (in_shape[2] - k) // s + 1)

    def _windows(self, x: np.ndarray) -> np.ndarray:
        k, s = self.kernel, self.stride
        return sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]


class MaxPool(_Pool):
    kind = "max_pool"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._windows(x).max(axis=(3, 4))

    def argmax(self, x: np.ndarray) -> np.ndarray:
        """Flat within-window index of the first (row-major) maximum."""
        win = self._windows(x)
        c, oh, ow = win.shape[:3]
        return win.reshape(c, oh, ow, -1).argmax(axis=3)

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        k, s = self.kernel, self.stride
        amax = self.argmax(x)
        c, oh, ow = amax.shape
        ci, hi, wi = np.meshgrid(
            np.arange(c), np.arange(oh), np.arange(ow), indexing="ij"
        )
        rows = hi * s + amax // k
        cols = wi * s + amax % k
        gx = np.zeros_like(x)
        # overlapping windows may select the same element; accumulate
        np.add.at(gx, (ci.ravel(), rows.ravel(), cols.ravel()), gy.ravel())
        return gx


class AvgPool(_Pool):
    kind = "avg_pool"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._windows(x).mean(axis=(3, 4))

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        k, s = self.kernel, self.stride
        oh, ow = gy.shape[1], gy.shape[2]
        share = gy / (k * k)
        gx = np.zeros_like(x)
        for i in range(k):
            for j in range(k):
                gx[:, i : i + s * oh : s, j : j + s * ow : s] += share
        return gx


class GlobalAvgPool:
    kind = "global_avg_pool"
    has_bias = False

    def out_shape(self, in_shape):
        _require_spatial(in_shape, self.kind)
        return (in_shape[0],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.mean(axis=(1, 2))

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        h, w = x.shape[1], x.shape[2]
        return np.broadcast_to(gy[:, None, None] / (h * w), x.shape).copy()


class Flatten:
    kind = "flatten"
    has_bias = False

    def out_shape(self, in_shape):
        size = 1
        for d in in_shape:
            size *= d
        return (size,)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(-1)

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        return gy.reshape(x.shape)


class Dense:
    """Affine map y = W x + b on 1-D inputs."""

    kind = "dense"

    def __init__(self, weight, bias=None):
        self.weight = _freeze(np.asarray(weight))
        if self.weight.ndim != 2:
            raise ShapeError(f"dense weight must be 2-D, got {self.weight.shape}")
        self.bias = None if bias is None else _freeze(np.asarray(bias))
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"dense bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} outputs"
            )

    @property
    def has_bias(self) -> bool:
        return self.bias is not None

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"dense needs a 1-D input, got {in_shape}")
        if in_shape[0] != self.weight.shape[1]:
            raise ShapeError(
                f"dense expects {self.weight.shape[1]} inputs, got {in_shape[0]}"
            )
        return (self.weight.shape[0],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = self.weight @ x
        if self.bias is not None:
            y = y + self.bias
        return y

    def backward(self, x: np.ndarray, gy: np.ndarray, guided: bool = False) -> np.ndarray:
        return self.weight.T @ gy

    def bias_grad(self, gy: np.ndarray) -> np.ndarray:
        return gy.copy()


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv2d, ReLU, MaxPool, AvgPool, GlobalAvgPool, Flatten, Dense)
}
