"""Alpha compositing identities and bounds."""
import numpy as np
import pytest

from dummynet.compositing import composite, validate_mask
from dummynet.errors import ShapeMismatch


def random_image(rng, shape=(8, 8, 3)):
    return rng.uniform(0, 1, size=shape)


class TestCompositeIdentities:
    def test_mask_all_ones_returns_foreground(self):
        rng = np.random.default_rng(0)
        fg, bg = random_image(rng), random_image(rng)
        out = composite(np.ones((8, 8)), fg, bg)
        assert np.array_equal(out, fg)

    def test_mask_all_zeros_returns_background(self):
        rng = np.random.default_rng(1)
        fg, bg = random_image(rng), random_image(rng)
        out = composite(np.zeros((8, 8)), fg, bg)
        assert np.array_equal(out, bg)

    def test_half_mask_arithmetic(self):
        out = composite(np.full((4, 4), 0.5), np.ones((4, 4, 3)), np.zeros((4, 4, 3)))
        assert np.all(out == 0.5)

    def test_idempotent_with_binary_mask(self):
        rng = np.random.default_rng(2)
        fg, bg = random_image(rng), random_image(rng)
        mask = (rng.uniform(size=(8, 8)) > 0.5).astype(float)
        aug = composite(mask, fg, bg)
        again = composite(mask, aug, bg)
        assert np.array_equal(aug, again)

    def test_complement_symmetry(self):
        rng = np.random.default_rng(3)
        fg, bg = random_image(rng), random_image(rng)
        mask = rng.uniform(size=(8, 8))
        a = composite(mask, fg, bg)
        b = composite(1 - mask, bg, fg)
        assert np.allclose(a, b)

    def test_output_bounded_by_inputs(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            fg, bg = random_image(rng), random_image(rng)
            mask = rng.uniform(size=(8, 8))
            out = composite(mask, fg, bg)
            lo = np.minimum(fg, bg)
            hi = np.maximum(fg, bg)
            assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)

    def test_pixels_with_zero_mask_bit_identical(self):
        rng = np.random.default_rng(5)
        fg, bg = random_image(rng), random_image(rng)
        mask = (rng.uniform(size=(8, 8)) > 0.7).astype(float)
        out = composite(mask, fg, bg)
        zero = mask == 0
        assert np.array_equal(out[zero], bg[zero])

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeMismatch):
            composite(np.ones((4, 4)), np.ones((4, 4, 3)), np.ones((5, 5, 3)))
        with pytest.raises(ShapeMismatch):
            composite(np.ones((5, 4)), np.ones((4, 4, 3)), np.ones((4, 4, 3)))


class TestValidateMask:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            validate_mask(np.array([[0.0, 1.2]]))
        with pytest.raises(ValueError):
            validate_mask(np.array([[np.nan]]))

    def test_accepts_valid(self):
        m = validate_mask(np.array([[0.0, 0.5, 1.0]]))
        assert m.shape == (1, 3)
