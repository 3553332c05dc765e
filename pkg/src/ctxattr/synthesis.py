"""Context-variant synthesis.

Every operation here rewrites the context (mask = 0) while leaving object
pixels (mask = 1) bit-identical to the source image:

* only_fg            — context blacked out.
* mixed_composite    — context from a donor image's dilation-filled
                       background (donor picked by class strategy).
* noise_background   — context replaced by seeded gaussian/uniform noise
                       or by the image's mean color.
* corrupt_context    — the full image is corrupted (fog, snow, motion
                       blur, gaussian noise, pixelate at severities 1-5),
                       then the object is pasted back unchanged.

All stochastic kinds consume a 64-bit seed; derive_seed() mixes the
global seed with the sample id and a variant tag so outputs do not depend
on worker scheduling.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParamError, PoolError, ShapeError
from .tensor import BinaryMask, ImageTensor

VARIANT_KINDS = (
    "original",
    "only_fg",
    "mixed_same",
    "mixed_rand",
    "mixed_next",
    "gaussian_noise_bg",
    "white_noise_bg",
    "meannorm_noise_bg",
    "corrupt_context",
)
MIXED_KINDS = ("mixed_same", "mixed_rand", "mixed_next")
CORRUPTION_KINDS = ("fog", "snow", "motion_blur", "gaussian_noise", "pixelate")

# Severity tables, index = severity - 1, pixel values in [0, 1].
NOISE_SIGMA = (0.08, 0.12, 0.18, 0.26, 0.38)
BLUR_LENGTH = (5, 7, 9, 13, 17)
PIXELATE_FACTOR = (0.6, 0.5, 0.4, 0.3, 0.25)
FOG_STRENGTH = (1.5, 2.0, 2.5, 3.0, 3.5)
FOG_ROUGHNESS = (2.0, 2.0, 1.7, 1.5, 1.2)
SNOW_THRESHOLD = (0.9, 0.85, 0.8, 0.75, 0.7)
SNOW_BLEND = (0.2, 0.3, 0.4, 0.5, 0.6)


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption kernel at one severity; parameters come from the
    module-level severity tables."""

    kind: str
    severity: int = 3

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ParamError(
                f"unknown corruption {self.kind!r}; expected one of "
                f"{CORRUPTION_KINDS}"
            )
        if not 1 <= int(self.severity) <= 5:
            raise ParamError(f"severity {self.severity} out of range 1..5")

    @property
    def params(self) -> dict:
        i = self.severity - 1
        if self.kind == "gaussian_noise":
            return {"sigma": NOISE_SIGMA[i]}
        if self.kind == "motion_blur":
            return {"length": BLUR_LENGTH[i]}
        if self.kind == "pixelate":
            return {"factor": PIXELATE_FACTOR[i]}
        if self.kind == "fog":
            return {"strength": FOG_STRENGTH[i], "roughness": FOG_ROUGHNESS[i]}
        return {"threshold": SNOW_THRESHOLD[i], "blend": SNOW_BLEND[i],
                "length": BLUR_LENGTH[i]}


@dataclass(frozen=True)
class VariantSpec:
    """One context variant; corruption/severity apply to corrupt_context
    only, and stochastic kinds need a seed by synthesis time."""

    kind: str
    corruption: CorruptionSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ParamError(
                f"unknown variant {self.kind!r}; expected one of {VARIANT_KINDS}"
            )
        if self.kind == "corrupt_context" and self.corruption is None:
            raise ParamError("corrupt_context needs a CorruptionSpec")
        if self.kind != "corrupt_context" and self.corruption is not None:
            raise ParamError(f"variant {self.kind!r} takes no corruption")

    @property
    def tag(self) -> str:
        """Stable name used for seeds, file names, and report rows."""
        if self.kind == "corrupt_context":
            return f"{self.corruption.kind}_s{self.corruption.severity}"
        return self.kind

    @property
    def stochastic(self) -> bool:
        if self.kind in ("original", "only_fg", "meannorm_noise_bg"):
            return False
        if self.kind == "corrupt_context":
            return self.corruption.kind != "pixelate"
        return True


def derive_seed(global_seed: int, sample_id: str, tag: str) -> int:
    """Mix (global seed, sample id, variant tag) into a stable 64-bit seed,
    so per-sample outputs are independent of scheduling."""
    digest = hashlib.blake2b(
        f"{global_seed}|{sample_id}|{tag}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def _check_dims(img: ImageTensor, mask: BinaryMask) -> None:
    if (img.height, img.width) != (mask.height, mask.width):
        raise ShapeError(
            f"image ({img.height}, {img.width}) and mask "
            f"({mask.height}, {mask.width}) dimensions differ"
        )


def _paste_object(img: ImageTensor, mask: BinaryMask, background: np.ndarray) -> ImageTensor:
    """Combine object pixels (bit-exact from img) with a new background."""
    keep = mask.data[None, :, :] == 1
    out = np.where(keep, img.data, background.astype(np.float32))
    return ImageTensor(out)


def only_fg(img: ImageTensor, mask: BinaryMask) -> ImageTensor:
    """Black out the context; object pixels are bit-identical."""
    _check_dims(img, mask)
    return _paste_object(img, mask, np.zeros_like(img.data))


def make_donor_background(img: ImageTensor, mask: BinaryMask) -> ImageTensor:
    """Remove the donor's object by dilation-averaging the context inward.

    Each pass fills still-empty object pixels with the mean of their
    already-valued 8-neighbors, until none remain. An all-object mask has
    no context to grow from and falls back to the image's mean color.
    """
    _check_dims(img, mask)
    if not mask.data.any():
        return img
    h, w = mask.height, mask.width
    if mask.data.all():
        color = img.data.reshape(3, -1).mean(axis=1, dtype=np.float64)
        return ImageTensor(np.broadcast_to(
            color.astype(np.float32)[:, None, None], (3, h, w)
        ).copy())

    values = img.data.astype(np.float64)
    known = mask.data == 0
    while not known.all():
        padv = np.pad(values * known[None, :, :], ((0, 0), (1, 1), (1, 1)))
        padk = np.pad(known.astype(np.float64), 1)
        nbr_sum = np.zeros_like(values)
        nbr_cnt = np.zeros((h, w))
        for dr in range(3):
            for dc in range(3):
                if dr == 1 and dc == 1:
                    continue
                nbr_sum += padv[:, dr:dr + h, dc:dc + w]
                nbr_cnt += padk[dr:dr + h, dc:dc + w]
        fillable = ~known & (nbr_cnt > 0)
        values[:, fillable] = nbr_sum[:, fillable] / nbr_cnt[fillable]
        known |= fillable
    out = values.astype(np.float32)
    ctx = mask.data == 0
    out[:, ctx] = img.data[:, ctx]
    return ImageTensor(out)


def mixed_composite(
    fg_img: ImageTensor, fg_mask: BinaryMask, donor_bg: ImageTensor
) -> ImageTensor:
    """Object pixels from fg_img (bit-exact), context from donor_bg."""
    _check_dims(fg_img, fg_mask)
    _check_dims(donor_bg, fg_mask)
    return _paste_object(fg_img, fg_mask, donor_bg.data)


def pick_donor(strategy: str, sample, pool, seed: int):
    """Choose a background-donor record from the pool.

    same: uniform over the sample's own class, excluding itself;
    rand: uniform over the other classes, then uniform within;
    next: class (c + 1) mod C in manifest class-index order.
    Deterministic given (seed, sample_id, strategy) and invariant to the
    pool's ordering.
    """
    if strategy not in ("same", "rand", "next"):
        raise ParamError(f"unknown donor strategy {strategy!r}")
    if not pool:
        raise PoolError("empty donor pool")
    class_count = max(rec.class_id for rec in pool) + 1
    if strategy == "same":
        candidates = [
            r for r in pool
            if r.class_id == sample.class_id and r.sample_id != sample.sample_id
        ]
    elif strategy == "next":
        wanted = (sample.class_id + 1) % class_count
        if wanted == sample.class_id:
            raise PoolError("next-class strategy needs more than one class")
        candidates = [r for r in pool if r.class_id == wanted]
    else:
        candidates = [r for r in pool if r.class_id != sample.class_id]
    if not candidates:
        raise PoolError(
            f"no eligible {strategy!r} donor for sample {sample.sample_id!r}"
        )
    candidates.sort(key=lambda r: r.sample_id)
    rng = np.random.default_rng(derive_seed(seed, sample.sample_id, f"donor:{strategy}"))
    if strategy == "rand":
        classes = sorted({r.class_id for r in candidates})
        cls = classes[int(rng.integers(len(classes)))]
        candidates = [r for r in candidates if r.class_id == cls]
    return candidates[int(rng.integers(len(candidates)))]


def noise_background(
    img: ImageTensor, mask: BinaryMask, kind: str, seed: int
) -> ImageTensor:
    """Replace the context with an information-free background."""
    _check_dims(img, mask)
    rng = np.random.default_rng(seed)
    shape = img.data.shape
    if kind == "gaussian":
        bg = np.clip(0.5 + rng.normal(0.0, 0.2, shape), 0.0, 1.0)
    elif kind == "white":
        bg = rng.uniform(0.0, 1.0, shape)
    elif kind == "meannorm":
        color = img.data.reshape(3, -1).mean(axis=1, dtype=np.float64)
        bg = np.broadcast_to(color[:, None, None], shape)
    else:
        raise ParamError(
            f"unknown noise kind {kind!r}; expected gaussian, white, or meannorm"
        )
    return _paste_object(img, mask, np.ascontiguousarray(bg))


# --- corruption kernels (operate on (3, H, W) float64 in [0, 1]) ------------


def gaussian_noise_kernel(x: np.ndarray, sigma: float, rng) -> np.ndarray:
    return np.clip(x + rng.normal(0.0, sigma, x.shape), 0.0, 1.0)


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized 1-pixel-wide line of the given length and angle."""
    kernel = np.zeros((length, length))
    center = (length - 1) / 2.0
    theta = math.radians(angle_deg)
    for i in range(length):
        t = i - center
        r = int(round(center + t * math.sin(theta)))
        c = int(round(center + t * math.cos(theta)))
        kernel[r, c] += 1.0
    return kernel / kernel.sum()


def _convolve_reflect(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    pad = np.pad(plane, ((ph, ph), (pw, pw)), mode="reflect")
    out = np.zeros_like(plane)
    for r, c in zip(*np.nonzero(kernel)):
        out += kernel[r, c] * pad[r:r + h, c:c + w]
    return out


def motion_blur_kernel(x: np.ndarray, length: int, angle_deg: float) -> np.ndarray:
    kernel = _line_kernel(length, angle_deg)
    return np.clip(np.stack([_convolve_reflect(p, kernel) for p in x]), 0.0, 1.0)


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Area-overlap averaging weights for a box downscale along one axis."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), n_in)):
            weights[i, j] = min(hi, j + 1) - max(lo, j)
    return weights / weights.sum(axis=1, keepdims=True)


def pixelate_kernel(x: np.ndarray, factor: float) -> np.ndarray:
    """Box-downscale by the factor, then nearest-neighbor upscale."""
    _, h, w = x.shape
    down_h = max(1, int(round(h * factor)))
    down_w = max(1, int(round(w * factor)))
    wh = _box_weights(h, down_h)
    ww = _box_weights(w, down_w)
    down = np.einsum("ij,cjk,lk->cil", wh, x, ww)
    rows = np.minimum((np.arange(h) * down_h) // h, down_h - 1)
    cols = np.minimum((np.arange(w) * down_w) // w, down_w - 1)
    return np.clip(down[:, rows[:, None], cols[None, :]], 0.0, 1.0)


def _plasma(h: int, w: int, roughness: float, rng) -> np.ndarray:
    """Diamond-square fractal, min-max normalized to [0, 1]."""
    size = 1
    while size + 1 < max(h, w, 2):
        size *= 2
    size += 1
    grid = np.zeros((size, size))
    grid[0, 0] = rng.uniform()
    grid[0, -1] = rng.uniform()
    grid[-1, 0] = rng.uniform()
    grid[-1, -1] = rng.uniform()
    step = size - 1
    amp = 1.0
    while step > 1:
        half = step // 2
        for r in range(half, size, step):
            for c in range(half, size, step):
                avg = (
                    grid[r - half, c - half] + grid[r - half, c + half]
                    + grid[r + half, c - half] + grid[r + half, c + half]
                ) / 4.0
                grid[r, c] = avg + rng.uniform(-amp, amp)
        for r in range(0, size, half):
            start = half if (r // half) % 2 == 0 else 0
            for c in range(start, size, step):
                total = 0.0
                count = 0
                for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < size and 0 <= cc < size:
                        total += grid[rr, cc]
                        count += 1
                grid[r, c] = total / count + rng.uniform(-amp, amp)
        step = half
        amp *= 2.0 ** (-roughness)
    grid = grid[:h, :w]
    lo, hi = grid.min(), grid.max()
    if hi == lo:
        return np.zeros_like(grid)
    return (grid - lo) / (hi - lo)


def fog_kernel(x: np.ndarray, strength: float, roughness: float, rng) -> np.ndarray:
    _, h, w = x.shape
    plasma = _plasma(h, w, roughness, rng)
    lifted = x + strength * plasma[None, :, :]
    return np.clip(lifted / (1.0 + strength * plasma.max()), 0.0, 1.0)


def snow_kernel(
    x: np.ndarray, threshold: float, blend: float, length: int, rng
) -> np.ndarray:
    """Seeded flakes blurred into streaks, screened over the image.

    Draw order: streak angle, then the flake field. Flakes are the pixels
    of a standard-normal field above its threshold-quantile; the blurred
    field is peak-normalized, lightened against the image with max(), and
    blended in at the severity's weight.
    """
    _, h, w = x.shape
    angle = rng.uniform(-80.0, -50.0)
    field = rng.normal(0.0, 1.0, (h, w))
    seeds = (field > np.quantile(field, threshold)).astype(np.float64)
    streaks = _convolve_reflect(seeds, _line_kernel(length, angle))
    peak = streaks.max()
    if peak > 0:
        streaks = streaks / peak
    lightened = np.maximum(x, streaks[None, :, :])
    return np.clip((1.0 - blend) * x + blend * lightened, 0.0, 1.0)


def corrupt_context(
    img: ImageTensor, mask: BinaryMask, spec: CorruptionSpec, seed: int
) -> ImageTensor:
    """Corrupt the whole image, then restore object pixels bit-exactly."""
    _check_dims(img, mask)
    rng = np.random.default_rng(seed)
    x = img.data.astype(np.float64)
    p = spec.params
    if spec.kind == "gaussian_noise":
        corrupted = gaussian_noise_kernel(x, p["sigma"], rng)
    elif spec.kind == "motion_blur":
        angle = rng.uniform(-45.0, 45.0)
        corrupted = motion_blur_kernel(x, p["length"], angle)
    elif spec.kind == "pixelate":
        corrupted = pixelate_kernel(x, p["factor"])
    elif spec.kind == "fog":
        corrupted = fog_kernel(x, p["strength"], p["roughness"], rng)
    else:
        corrupted = snow_kernel(x, p["threshold"], p["blend"], p["length"], rng)
    return _paste_object(img, mask, corrupted)


def apply_variant(
    img: ImageTensor,
    mask: BinaryMask,
    spec: VariantSpec,
    seed: int | None = None,
    donor_bg: ImageTensor | None = None,
) -> ImageTensor:
    """Synthesize one variant of one sample.

    Mixed kinds need donor_bg (a donor background prepared by
    make_donor_background and resized to this sample's frame); stochastic
    kinds need a seed, taken from the argument or the spec.
    """
    seed = seed if seed is not None else spec.seed
    if spec.stochastic and seed is None:
        raise ParamError(f"variant {spec.tag!r} needs a seed")
    if spec.kind == "original":
        return img
    if spec.kind == "only_fg":
        return only_fg(img, mask)
    if spec.kind in MIXED_KINDS:
        if donor_bg is None:
            raise ParamError(f"variant {spec.kind!r} needs a donor background")
        return mixed_composite(img, mask, donor_bg)
    if spec.kind == "gaussian_noise_bg":
        return noise_background(img, mask, "gaussian", seed)
    if spec.kind == "white_noise_bg":
        return noise_background(img, mask, "white", seed)
    if spec.kind == "meannorm_noise_bg":
        return noise_background(img, mask, "meannorm", seed or 0)
    return corrupt_context(img, mask, spec.corruption, seed if seed is not None else 0)
