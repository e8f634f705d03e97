"""PSNR and SSIM for 8-bit-range images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .patches import as_planes

__all__ = ["QualityScore", "psnr", "ssim", "score"]


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 255.0) -> float:
    """``10 log10(peak^2 / MSE)`` over all pixels and channels; ``inf`` if equal."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_taps(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    h = taps.size // 2
    y = correlate1d(correlate1d(x, taps, axis=0, mode="nearest"), taps, axis=1, mode="nearest")
    return y[h:-h, h:-h]


def _ssim_plane(a: np.ndarray, b: np.ndarray, L: float, k1: float, k2: float) -> float:
    taps = _gaussian_taps()
    C1 = (k1 * L) ** 2
    C2 = (k2 * L) ** 2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    var_a = _filter_valid(a * a, taps) - mu_a * mu_a
    var_b = _filter_valid(b * b, taps) - mu_b * mu_b
    cov = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return float(np.mean(num / den))


def ssim(a, b, L: float = 255.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Statistics are taken over windows that fit entirely inside the image.
    Color images score the unweighted mean of the per-channel values.
    """
    a, b = _pair(a, b)
    pa, pb = as_planes(a), as_planes(b)
    if min(pa.shape[:2]) < 11:
        raise ValueError(f"SSIM needs images of at least 11x11, got {pa.shape[:2]}")
    vals = [_ssim_plane(pa[:, :, c], pb[:, :, c], L, k1, k2) for c in range(pa.shape[2])]
    return float(np.mean(vals))


def score(estimate, reference) -> QualityScore:
    return QualityScore(psnr(estimate, reference), ssim(estimate, reference))
