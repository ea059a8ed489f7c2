import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strokegestalt.metrics import (
    gaussian_window,
    normalize_text,
    psnr,
    recognition_accuracy,
    ssim,
    to_gray,
)


def reference_psnr(a, b):
    # independent textbook formula: 10*log10(peak^2 / mse), peak = 1
    mse = np.mean(np.square(np.asarray(a) - np.asarray(b)))
    return 10.0 * np.log10(1.0**2 / mse)


def reference_ssim(a, b, size=11, sigma=1.5):
    """Brute-force sliding-window SSIM on luma, one window at a time."""
    x = to_gray(a)
    y = to_gray(b)
    w = gaussian_window(size, sigma)
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px = x[i : i + size, j : j + size]
            py = y[i : i + size, j : j + size]
            mx = (w * px).sum()
            my = (w * py).sum()
            vx = (w * px * px).sum() - mx**2
            vy = (w * py * py).sum() - my**2
            cov = (w * px * py).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx**2 + my**2 + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_is_inf(self, rng):
        x = rng.random((8, 8, 3))
        assert psnr(x, x) == math.inf

    def test_constant_images(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.5)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-4)

    def test_matches_reference_on_random_pairs(self, rng):
        for _ in range(100):
            a = rng.random((6, 9, 3))
            b = rng.random((6, 9, 3))
            assert psnr(a, b) == pytest.approx(reference_psnr(a, b), abs=1e-9)

    def test_symmetry(self, rng):
        a, b = rng.random((5, 5)), rng.random((5, 5))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 3)), np.zeros((4, 4)))

    def test_noise_monotonicity(self, rng):
        a = rng.random((16, 16, 3))
        small = [psnr(a, np.clip(a + rng.normal(0, 0.02, a.shape), 0, 1)) for _ in range(20)]
        large = [psnr(a, np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)) for _ in range(20)]
        assert np.mean(small) > np.mean(large)


class TestSsim:
    def test_identical_is_one(self, rng):
        x = rng.random((16, 20, 3))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_binary_inversion_negative(self, rng):
        x = (rng.random((16, 16)) > 0.5).astype(float)
        assert ssim(x, 1 - x) < 0

    def test_matches_reference_on_random_pairs(self, rng):
        for _ in range(10):
            a = rng.random((14, 15, 3))
            b = rng.random((14, 15, 3))
            assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-6)

    def test_symmetry(self, rng):
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_image(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestNormalizeText:
    def test_punctuation_and_case(self):
        assert normalize_text("Hello!") == "hello"

    def test_fixed_point(self):
        assert normalize_text("300ml") == "300ml"

    @given(st.text(max_size=40))
    def test_idempotent(self, s):
        assert normalize_text(normalize_text(s)) == normalize_text(s)


class TestRecognitionAccuracy:
    def test_half(self):
        assert recognition_accuracy(["abc", "xyz"], ["abc", "xyy"]) == 0.5

    def test_exact(self):
        gts = ["a1", "b2"]
        assert recognition_accuracy(gts, gts) == 1.0

    def test_normalization_only_differences(self):
        assert recognition_accuracy(["AB-C!", "x.y"], ["abc", "XY"]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            recognition_accuracy(["a"], ["a", "b"])
