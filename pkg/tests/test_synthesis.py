"""Context-variant synthesis tests.

Independent oracles: hand-built tiny masks with forced outputs, a
reshape-based block-mean check for pixelate, and the frozen seed-mix
values that pin the derivation scheme.
"""

from dataclasses import dataclass

import numpy as np
import pytest

from ctxattr.errors import ParamError, PoolError, ShapeError
from ctxattr.synthesis import (
    CORRUPTION_KINDS,
    CorruptionSpec,
    VariantSpec,
    apply_variant,
    corrupt_context,
    derive_seed,
    gaussian_noise_kernel,
    make_donor_background,
    mixed_composite,
    noise_background,
    only_fg,
    pick_donor,
    pixelate_kernel,
    motion_blur_kernel,
)
from ctxattr.tensor import BinaryMask, ImageTensor


@dataclass(frozen=True)
class Rec:
    sample_id: str
    class_id: int


def random_image(rng, h=20, w=20) -> ImageTensor:
    return ImageTensor(rng.uniform(0.0, 1.0, (3, h, w)).astype(np.float32))


def blob_mask(rng, h=20, w=20, fill=0.3) -> BinaryMask:
    data = (rng.uniform(size=(h, w)) < fill).astype(np.uint8)
    return BinaryMask(data)


def object_bytes(img: ImageTensor, mask: BinaryMask) -> bytes:
    return img.data[:, mask.data == 1].tobytes()


ALL_VARIANTS = [
    VariantSpec("only_fg"),
    VariantSpec("mixed_same"),
    VariantSpec("mixed_rand"),
    VariantSpec("mixed_next"),
    VariantSpec("gaussian_noise_bg"),
    VariantSpec("white_noise_bg"),
    VariantSpec("meannorm_noise_bg"),
] + [
    VariantSpec("corrupt_context", CorruptionSpec(kind, severity))
    for kind in CORRUPTION_KINDS
    for severity in (1, 3, 5)
]


class TestSeedDerivation:
    def test_frozen_values(self):
        """Pinned mix outputs: changing the derivation would silently break
        reproducibility of every stochastic variant."""
        assert derive_seed(7, "sample-01", "only_fg") == 4454231959971377818
        assert derive_seed(2024, "a", "gaussian_noise_s3") == 1315853256708832093

    def test_components_all_matter(self):
        base = derive_seed(1, "s", "t")
        assert derive_seed(2, "s", "t") != base
        assert derive_seed(1, "x", "t") != base
        assert derive_seed(1, "s", "u") != base

    def test_unsigned_64_bit(self):
        for seed in (0, 123456789, 2**63):
            value = derive_seed(seed, "id", "tag")
            assert 0 <= value < 2**64


class TestOnlyFg:
    def test_all_ones_mask_is_identity(self, rng):
        img = random_image(rng)
        mask = BinaryMask(np.ones((20, 20), dtype=np.uint8))
        out = only_fg(img, mask)
        assert out.data.tobytes() == img.data.tobytes()

    def test_all_zeros_mask_is_black(self, rng):
        img = random_image(rng)
        mask = BinaryMask(np.zeros((20, 20), dtype=np.uint8))
        out = only_fg(img, mask)
        assert np.all(out.data == 0.0)

    def test_single_pixel_mask(self, rng):
        img = ImageTensor(rng.uniform(0.1, 1.0, (3, 2, 2)).astype(np.float32))
        mask = BinaryMask(np.array([[1, 0], [0, 0]], dtype=np.uint8))
        out = only_fg(img, mask)
        assert out.data[:, 0, 0].tobytes() == img.data[:, 0, 0].tobytes()
        assert np.all(out.data[:, 0, 1] == 0.0)
        assert np.all(out.data[:, 1, :] == 0.0)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            only_fg(random_image(rng, 4, 4), BinaryMask(np.zeros((5, 5), np.uint8)))


class TestDonorBackground:
    def test_all_context_unchanged(self, rng):
        img = random_image(rng)
        mask = BinaryMask(np.zeros((20, 20), dtype=np.uint8))
        out = make_donor_background(img, mask)
        assert out.data.tobytes() == img.data.tobytes()

    def test_all_object_falls_back_to_mean_color(self, rng):
        img = random_image(rng, 6, 6)
        mask = BinaryMask(np.ones((6, 6), dtype=np.uint8))
        out = make_donor_background(img, mask)
        expect = img.data.reshape(3, -1).mean(axis=1, dtype=np.float64)
        for c in range(3):
            assert np.all(out.data[c] == np.float32(expect[c]))

    def test_center_pixel_filled_with_neighbor_mean(self):
        """Uniform 0.5 context around a single object pixel: one dilation
        pass fills the center with exactly 0.5."""
        data = np.full((3, 3, 3), 0.5, dtype=np.float32)
        data[:, 1, 1] = 0.9
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[1, 1] = 1
        out = make_donor_background(ImageTensor(data), BinaryMask(mask))
        assert np.all(out.data[:, 1, 1] == np.float32(0.5))

    def test_context_pixels_bit_exact(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng)
        out = make_donor_background(img, mask)
        ctx = mask.data == 0
        assert out.data[:, ctx].tobytes() == img.data[:, ctx].tobytes()

    def test_fills_every_pixel(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng, fill=0.6)
        out = make_donor_background(img, mask)
        assert np.isfinite(out.data).all()


class TestMixedComposite:
    def test_all_ones_gives_foreground(self, rng):
        fg, bg = random_image(rng), random_image(rng)
        mask = BinaryMask(np.ones((20, 20), dtype=np.uint8))
        assert mixed_composite(fg, mask, bg).data.tobytes() == fg.data.tobytes()

    def test_all_zeros_gives_donor(self, rng):
        fg, bg = random_image(rng), random_image(rng)
        mask = BinaryMask(np.zeros((20, 20), dtype=np.uint8))
        assert mixed_composite(fg, mask, bg).data.tobytes() == bg.data.tobytes()

    def test_checkerboard_interleaves(self, rng):
        fg, bg = random_image(rng, 4, 4), random_image(rng, 4, 4)
        board = np.indices((4, 4)).sum(axis=0) % 2
        mask = BinaryMask(board.astype(np.uint8))
        out = mixed_composite(fg, mask, bg)
        expect = np.where(board[None] == 1, fg.data, bg.data)
        assert out.data.tobytes() == expect.tobytes()


class TestPickDonor:
    pool = [
        Rec("a0", 0), Rec("a1", 0), Rec("a2", 0),
        Rec("b0", 1), Rec("b1", 1),
        Rec("c0", 2),
    ]

    def test_same_never_returns_self(self):
        for seed in range(20):
            donor = pick_donor("same", Rec("a1", 0), self.pool, seed)
            assert donor.class_id == 0
            assert donor.sample_id != "a1"

    def test_rand_never_own_class(self):
        for seed in range(20):
            donor = pick_donor("rand", Rec("a0", 0), self.pool, seed)
            assert donor.class_id != 0

    def test_next_is_cyclic_successor(self):
        for seed in range(10):
            assert pick_donor("next", Rec("a0", 0), self.pool, seed).class_id == 1
            assert pick_donor("next", Rec("c0", 2), self.pool, seed).class_id == 0

    def test_single_class_next_fails(self):
        pool = [Rec("a0", 0), Rec("a1", 0)]
        with pytest.raises(PoolError):
            pick_donor("next", Rec("a0", 0), pool, 1)

    def test_no_same_class_partner_fails(self):
        with pytest.raises(PoolError):
            pick_donor("same", Rec("c0", 2), self.pool, 1)

    def test_deterministic_and_order_invariant(self):
        sample = Rec("b0", 1)
        first = pick_donor("rand", sample, self.pool, 99)
        again = pick_donor("rand", sample, self.pool, 99)
        shuffled = pick_donor("rand", sample, list(reversed(self.pool)), 99)
        assert first == again == shuffled


class TestNoiseBackground:
    @pytest.mark.parametrize("kind", ["gaussian", "white", "meannorm"])
    def test_all_ones_mask_identity(self, rng, kind):
        img = random_image(rng)
        mask = BinaryMask(np.ones((20, 20), dtype=np.uint8))
        out = noise_background(img, mask, kind, seed=5)
        assert out.data.tobytes() == img.data.tobytes()

    def test_meannorm_uses_channel_means(self):
        """Channel-constant image (0.2, 0.4, 0.6): every context pixel gets
        exactly that color."""
        planes = np.stack([
            np.full((8, 8), v, dtype=np.float32) for v in (0.2, 0.4, 0.6)
        ])
        img = ImageTensor(planes)
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[2:4, 2:4] = 1
        out = noise_background(img, BinaryMask(mask), "meannorm", seed=0)
        ctx = mask == 0
        for c, v in enumerate((0.2, 0.4, 0.6)):
            assert np.all(out.data[c][ctx] == np.float32(v))

    @pytest.mark.parametrize("kind", ["gaussian", "white", "meannorm"])
    def test_object_preserved_and_in_range(self, rng, kind):
        img = random_image(rng)
        mask = blob_mask(rng)
        out = noise_background(img, mask, kind, seed=11)
        assert object_bytes(out, mask) == object_bytes(img, mask)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_same_seed_bit_identical(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng)
        a = noise_background(img, mask, "gaussian", seed=42)
        b = noise_background(img, mask, "gaussian", seed=42)
        assert a.data.tobytes() == b.data.tobytes()
        c = noise_background(img, mask, "gaussian", seed=43)
        assert a.data.tobytes() != c.data.tobytes()

    def test_unknown_kind(self, rng):
        with pytest.raises(ParamError):
            noise_background(random_image(rng), blob_mask(rng), "pink", seed=0)


class TestCorruptionKernels:
    def test_gaussian_sigma_zero_is_identity(self, rng):
        x = rng.uniform(0.0, 1.0, (3, 8, 8))
        out = gaussian_noise_kernel(x, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_pixelate_factor_one_is_identity(self, rng):
        x = rng.uniform(0.0, 1.0, (3, 8, 8))
        np.testing.assert_array_equal(pixelate_kernel(x, 1.0), x)

    def test_pixelate_half_gives_block_means(self, rng):
        """4x4 at factor 0.5: every 2x2 block becomes its block mean."""
        x = rng.uniform(0.0, 1.0, (3, 4, 4))
        means = x.reshape(3, 2, 2, 2, 2).mean(axis=(2, 4))
        expect = np.repeat(np.repeat(means, 2, axis=1), 2, axis=2)
        np.testing.assert_allclose(pixelate_kernel(x, 0.5), expect, atol=1e-12)

    def test_motion_blur_preserves_constant_image(self):
        x = np.full((3, 12, 12), 0.4)
        out = motion_blur_kernel(x, 7, angle_deg=30.0)
        np.testing.assert_allclose(out, x, atol=1e-12)


class TestCorruptContext:
    def test_bad_severity_rejected(self):
        with pytest.raises(ParamError):
            CorruptionSpec("fog", 0)
        with pytest.raises(ParamError):
            CorruptionSpec("fog", 6)
        with pytest.raises(ParamError):
            CorruptionSpec("rain", 3)

    @pytest.mark.parametrize("kind", CORRUPTION_KINDS)
    def test_object_preserved_every_kind(self, rng, kind):
        img = random_image(rng)
        mask = blob_mask(rng)
        out = corrupt_context(img, mask, CorruptionSpec(kind, 3), seed=7)
        assert object_bytes(out, mask) == object_bytes(img, mask)

    @pytest.mark.parametrize("kind", CORRUPTION_KINDS)
    @pytest.mark.parametrize("severity", [1, 3, 5])
    def test_range_and_determinism(self, rng, kind, severity):
        img = random_image(rng)
        mask = blob_mask(rng)
        spec = CorruptionSpec(kind, severity)
        a = corrupt_context(img, mask, spec, seed=3)
        b = corrupt_context(img, mask, spec, seed=3)
        assert a.data.tobytes() == b.data.tobytes()
        assert a.data.min() >= 0.0 and a.data.max() <= 1.0

    def test_gaussian_noise_severity_monotone(self, rng):
        """Same seed, rising severity: mean absolute pixel change must not
        decrease (the noise field is shared, only sigma grows)."""
        img = random_image(rng)
        mask = blob_mask(rng, fill=0.2)
        changes = []
        for severity in range(1, 6):
            out = corrupt_context(
                img, mask, CorruptionSpec("gaussian_noise", severity), seed=5
            )
            changes.append(np.abs(
                out.data.astype(np.float64) - img.data.astype(np.float64)
            ).mean())
        assert all(b >= a for a, b in zip(changes, changes[1:]))

    def test_corruption_actually_changes_context(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng, fill=0.2)
        out = corrupt_context(img, mask, CorruptionSpec("gaussian_noise", 3), seed=1)
        ctx = mask.data == 0
        assert not np.array_equal(out.data[:, ctx], img.data[:, ctx])


class TestApplyVariant:
    def test_original_passthrough(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng)
        assert apply_variant(img, mask, VariantSpec("original")).data.tobytes() \
            == img.data.tobytes()

    def test_only_fg_dispatch(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng)
        out = apply_variant(img, mask, VariantSpec("only_fg"))
        assert out.data.tobytes() == only_fg(img, mask).data.tobytes()

    def test_noise_dispatch_matches_direct(self, rng):
        img = random_image(rng)
        mask = blob_mask(rng)
        out = apply_variant(img, mask, VariantSpec("gaussian_noise_bg"), seed=9)
        direct = noise_background(img, mask, "gaussian", seed=9)
        assert out.data.tobytes() == direct.data.tobytes()

    def test_mixed_needs_donor(self, rng):
        with pytest.raises(ParamError):
            apply_variant(random_image(rng), blob_mask(rng),
                          VariantSpec("mixed_same"), seed=1)

    def test_stochastic_needs_seed(self, rng):
        with pytest.raises(ParamError):
            apply_variant(random_image(rng), blob_mask(rng),
                          VariantSpec("white_noise_bg"))

    def test_corrupt_without_spec_rejected(self):
        with pytest.raises(ParamError):
            VariantSpec("corrupt_context")

    def test_corruption_on_plain_variant_rejected(self):
        with pytest.raises(ParamError):
            VariantSpec("only_fg", CorruptionSpec("fog", 1))

    def test_tags_are_distinct(self):
        tags = [spec.tag for spec in ALL_VARIANTS]
        assert len(tags) == len(set(tags))

    @pytest.mark.parametrize("spec", ALL_VARIANTS, ids=lambda s: s.tag)
    def test_object_preservation_every_kind(self, rng, spec):
        """The central synthesis invariant: object pixels survive every
        variant bit-for-bit."""
        img = random_image(rng)
        mask = blob_mask(rng)
        donor = make_donor_background(random_image(rng), blob_mask(rng)) \
            if spec.kind in ("mixed_same", "mixed_rand", "mixed_next") else None
        out = apply_variant(img, mask, spec, seed=13, donor_bg=donor)
        assert object_bytes(out, mask) == object_bytes(img, mask)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0
