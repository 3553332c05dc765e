"""Image, mask, and attribution-map types plus their interchange formats.

Conventions shared by every module:

* images are planar channel-major float32 arrays of shape (3, H, W),
  stored on disk as 8-bit PNG/JPEG and scaled to [0, 1] on load;
* masks are (H, W) uint8 arrays with strictly binary values, 1 = object;
* attribution maps are (H, W) float32 arrays with finite entries >= 0;
* sums and means accumulate in float64.

All three wrappers mark their backing array read-only, so instances are
safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DomainError, FormatError, IoError, ShapeError

# ITU-R BT.601 luma weights, used to binarize RGB mask rasters.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)

ATTR_MAGIC = b"ATTR"
ATTR_VERSION = 1
_ATTR_HEADER = struct.Struct("<4sHHII")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """An RGB raster: (3, H, W) float32 with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[0] != 3:
            raise ShapeError(f"expected (3, H, W) image data, got {data.shape}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ShapeError(f"degenerate image dimensions {data.shape}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return 3

    def to_uint8(self) -> np.ndarray:
        """Quantize to the stored 8-bit representation, shape (H, W, 3)."""
        clipped = np.clip(self.data, 0.0, 1.0)
        return np.rint(clipped * 255.0).astype(np.uint8).transpose(1, 2, 0)


@dataclass(frozen=True)
class BinaryMask:
    """A per-pixel object indicator: (H, W) uint8, 1 = object, 0 = context."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ShapeError(f"expected (H, W) mask data, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError(f"degenerate mask dimensions {data.shape}")
        values = np.unique(data)
        if not np.isin(values, (0, 1)).all():
            raise DomainError(f"mask values must be 0/1, found {values[:8]}")
        object.__setattr__(self, "data", _freeze(data.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AttributionMap:
    """A non-negative importance map in the input frame: (H, W) float.

    float32 and float64 data are kept as given (the interchange format
    stores float32; metrics accumulate in float64 either way); other
    dtypes are promoted to float64.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        if data.ndim != 2:
            raise ShapeError(f"expected (H, W) map data, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError(f"degenerate map dimensions {data.shape}")
        if not np.isfinite(data).all():
            raise DomainError("attribution map contains non-finite entries")
        if (data < 0).any():
            raise DomainError("attribution map contains negative entries")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _open_raster(path) -> Image.Image:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except PermissionError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path} is not a decodable raster: {exc}") from exc
    except OSError as exc:
        raise DecodeError(f"{path} failed to decode: {exc}") from exc
    return img


def load_image(path) -> ImageTensor:
    """Load an 8-bit RGB PNG/JPEG and scale its values to [0, 1]."""
    img = _open_raster(path)
    if img.mode not in ("RGB", "L"):
        try:
            img = img.convert("RGB")
        except OSError as exc:
            raise DecodeError(f"{path}: unsupported mode {img.mode}") from exc
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    planar = arr.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    return ImageTensor(planar)


def save_image(image: ImageTensor, path) -> None:
    """Write an image as an 8-bit RGB PNG."""
    path = Path(path)
    try:
        Image.fromarray(image.to_uint8(), mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_mask(path, threshold: float = 0.5) -> BinaryMask:
    """Binarize a raster: pixel -> 1 iff luminance/255 > threshold."""
    img = _open_raster(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        lum = arr[..., :3].astype(np.float64) @ _LUMA
    elif arr.ndim == 2:
        lum = arr.astype(np.float64)
    else:
        raise DecodeError(f"{path}: unsupported mask shape {arr.shape}")
    return BinaryMask((lum / 255.0 > threshold).astype(np.uint8))


def save_mask(mask: BinaryMask, path) -> None:
    """Write a mask as an 8-bit grayscale PNG (object = 255)."""
    path = Path(path)
    try:
        Image.fromarray(mask.data * np.uint8(255), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def resize_bilinear_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D array under half-pixel-center alignment.

    Source coordinates are (dst + 0.5) * in/out - 0.5, clamped to the valid
    index range. Interpolation runs in float64 and the result is clamped to
    the input's [min, max], so convexity holds exactly.
    """
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"zero-sized resize request ({out_h}, {out_w})")
    in_h, in_w = arr.shape
    src = arr.astype(np.float64, copy=False)

    def axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    fy = fy[:, None]
    fx = fx[None, :]

    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.clip(out, src.min(), src.max())


def resize_bilinear(map_: AttributionMap, out_h: int, out_w: int) -> AttributionMap:
    """Resample an attribution map to (out_h, out_w); see resize_bilinear_array."""
    if map_.height == out_h and map_.width == out_w:
        return map_
    out = resize_bilinear_array(map_.data, out_h, out_w)
    return AttributionMap(out.astype(map_.data.dtype))


def resize_image_bilinear(image: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Per-channel bilinear resample of an image."""
    if image.height == out_h and image.width == out_w:
        return image
    planes = [resize_bilinear_array(c, out_h, out_w) for c in image.data]
    return ImageTensor(np.stack(planes).astype(np.float32))


def object_fraction(mask: BinaryMask) -> float:
    """Fraction of pixels belonging to the object (mask = 1)."""
    return int(mask.data.sum(dtype=np.int64)) / mask.data.size


def context_fraction(mask: BinaryMask) -> float:
    """Fraction of pixels belonging to the context (mask = 0)."""
    total = mask.data.size
    return (total - int(mask.data.sum(dtype=np.int64))) / total


def write_attr_map(map_: AttributionMap, path) -> None:
    """Write a map in the bit-exact "ATTR" binary format.

    Layout: magic "ATTR", u16 version = 1, u16 reserved = 0, u32 height,
    u32 width, then height*width little-endian float32 values, row-major.
    """
    header = _ATTR_HEADER.pack(ATTR_MAGIC, ATTR_VERSION, 0, map_.height, map_.width)
    payload = np.ascontiguousarray(map_.data, dtype="<f4").tobytes()
    path = Path(path)
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_attr_map(path) -> AttributionMap:
    """Read a map written by write_attr_map; bit-exact round trip."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _ATTR_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, reserved, height, width = _ATTR_HEADER.unpack_from(blob)
    if magic != ATTR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != ATTR_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise FormatError(f"{path}: nonzero reserved field {reserved}")
    expected = _ATTR_HEADER.size + 4 * height * width
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length {len(blob) - _ATTR_HEADER.size} does not "
            f"match {height}x{width} float32"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_ATTR_HEADER.size)
    return AttributionMap(data.reshape(height, width).copy())
