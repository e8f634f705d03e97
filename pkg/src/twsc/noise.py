"""Noise level estimation and synthetic noise for tests and benchmarks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .patches import as_planes

__all__ = [
    "ChannelSigmas",
    "estimate_channel_sigma",
    "estimate_sigmas",
    "add_awgn",
    "add_heterogeneous_noise",
    "gradient_std_map",
]


@dataclass(frozen=True)
class ChannelSigmas:
    """Per-channel noise stds (one value for grayscale, three for RGB)."""

    values: tuple[float, ...]
    source: Literal["user_supplied", "estimated"] = "user_supplied"

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        if len(vals) not in (1, 3):
            raise ValueError(f"need 1 or 3 channel stds, got {len(vals)}")
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"channel stds must be finite and nonnegative: {vals}")
        object.__setattr__(self, "values", vals)

    @property
    def pooled(self) -> float:
        """Root mean square of the channel stds."""
        return math.sqrt(sum(v * v for v in self.values) / len(self.values))

    def __len__(self) -> int:
        return len(self.values)


def estimate_channel_sigma(channel) -> float:
    """Estimate the AWGN std of one image plane.

    Uses the 3x3 kernel ``[[1,-2,1],[-2,4,-2],[1,-2,1]]`` (Immerkaer's fast
    estimator): the kernel annihilates locally linear image content, and the
    mean absolute response over the valid region, scaled by
    ``sqrt(pi/2) / 6``, estimates the noise std.
    """
    plane = np.asarray(channel, dtype=float)
    if plane.ndim != 2 or min(plane.shape) < 3:
        raise ValueError(f"need a 2-D plane of at least 3x3, got shape {plane.shape}")
    # the kernel is the outer product of two second differences
    resp = np.diff(np.diff(plane, 2, axis=0), 2, axis=1)
    H, W = plane.shape
    return float(math.sqrt(math.pi / 2) * np.abs(resp).sum() / (6.0 * (W - 2) * (H - 2)))


def estimate_sigmas(image) -> ChannelSigmas:
    img = as_planes(image)
    return ChannelSigmas(
        tuple(estimate_channel_sigma(img[:, :, c]) for c in range(img.shape[2])),
        source="estimated",
    )


def add_awgn(image, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise; the result is not clamped."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    img = np.asarray(image, dtype=float)
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)


def add_heterogeneous_noise(
    image, channel_stds: Sequence[float] | ChannelSigmas, std_map, seed: int
) -> np.ndarray:
    """Add Gaussian noise with std ``channel_std[c] * std_map[y, x]`` per pixel."""
    img = np.asarray(image, dtype=float)
    if isinstance(channel_stds, ChannelSigmas):
        channel_stds = channel_stds.values
    scales = np.atleast_1d(np.asarray(channel_stds, dtype=float))
    std_map = np.asarray(std_map, dtype=float)
    if std_map.shape != img.shape[:2]:
        raise ValueError(f"std map shape {std_map.shape} != image size {img.shape[:2]}")
    if (std_map < 0).any() or (scales < 0).any():
        raise ValueError("noise stds must be nonnegative")
    n_ch = 1 if img.ndim == 2 else img.shape[2]
    if scales.size not in (1, n_ch):
        raise ValueError(f"{scales.size} channel stds for a {n_ch}-channel image")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(img.shape)
    if img.ndim == 2:
        return img + noise * std_map * scales[0]
    return img + noise * std_map[:, :, None] * scales[None, None, :]


def gradient_std_map(shape, ratio: float = 2.0) -> np.ndarray:
    """Left-to-right linear std multiplier from 1 to ``ratio``, scaled to unit RMS.

    With unit RMS the overall per-channel std of the added noise equals the
    channel scale, so the channel stds stay meaningful as solver inputs.
    """
    H, W = shape[:2]
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    row = np.linspace(1.0, ratio, W) if W > 1 else np.ones(1)
    m = np.broadcast_to(row, (H, W)).copy()
    return m / np.sqrt(np.mean(m**2))
