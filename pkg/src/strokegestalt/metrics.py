"""Image-quality metrics and the text normalization used for accuracy.

PSNR is computed on the [0,1] dynamic range (peak = 1). SSIM is computed on
luma with the standard 11x11 Gaussian window (sigma 1.5) and constants
C1=(0.01)^2, C2=(0.03)^2; absolute values from other SSIM variants may
therefore differ slightly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

PSNR_INF = math.inf

_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(img: np.ndarray) -> np.ndarray:
    """HxWx3 or HxWx1 or HxW -> HxW luma."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    if img.shape[-1] == 3:
        return img @ _LUMA
    raise ValueError(f"expected 1 or 3 channels, got shape {img.shape}")


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, window_size: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM over all fully-valid window positions, on luma."""
    a, b = _check_pair(a, b)
    x = to_gray(a)
    y = to_gray(b)
    if min(x.shape) < window_size:
        raise ValueError(f"image {x.shape} smaller than SSIM window {window_size}")

    w = gaussian_window(window_size, sigma)
    c1 = 0.01**2
    c2 = 0.03**2

    def filt(z):
        return fftconvolve(z, w, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def normalize_text(s: str) -> str:
    """Lowercase and strip punctuation/whitespace, keeping only alphanumerics."""
    return "".join(c for c in s.lower() if c.isalnum())


def recognition_accuracy(preds: list[str], gts: list[str]) -> float:
    """Fraction of predictions that match ground truth after normalization."""
    if not preds or len(preds) != len(gts):
        raise ValueError(f"need equal nonempty lists, got {len(preds)} vs {len(gts)}")
    hits = sum(normalize_text(p) == normalize_text(g) for p, g in zip(preds, gts))
    return hits / len(preds)
