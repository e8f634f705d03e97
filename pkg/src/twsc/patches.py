"""Patch extraction, nonlocal block matching, per-patch noise tracking and
aggregation.

Images are float arrays of shape ``(H, W)`` or ``(H, W, C)``. A vectorized
patch stacks the channel blocks ``[R; G; B]``, each block in row-major order.
Locations are top-left ``(row, col)`` coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PatchGroup",
    "SigmaTracker",
    "as_planes",
    "patch_vectors",
    "extract_patch_grid",
    "block_match",
    "init_patch_sigmas",
    "update_patch_sigmas",
    "patch_sigma_map",
    "Aggregator",
    "aggregate",
]


@dataclass(frozen=True)
class PatchGroup:
    """A reference patch and its nearest neighbours, reference in column 0."""

    Y: np.ndarray
    locations: np.ndarray
    distances: np.ndarray
    p: int
    reference_index: int = 0

    @property
    def size(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class SigmaTracker:
    sigma_global: float
    sigma_patches: np.ndarray


def as_planes(image) -> np.ndarray:
    """View an image as ``(H, W, C)`` float64."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D image, got shape {img.shape}")
    return img


def patch_vectors(image, p: int) -> np.ndarray:
    """All stride-1 patches as an ``(H-p+1, W-p+1, C*p*p)`` array (copied)."""
    img = as_planes(image)
    win = sliding_window_view(img, (p, p), axis=(0, 1))  # (h, w, C, p, p)
    return win.reshape(win.shape[0], win.shape[1], -1)


def _grid_axis(n: int, p: int, stride: int) -> list[int]:
    idx = list(range(0, n - p + 1, stride))
    if idx[-1] != n - p:
        idx.append(n - p)
    return idx


def extract_patch_grid(image, p: int, stride: int) -> np.ndarray:
    """Row-major reference locations on a ``stride`` grid.

    The last row and column positions are always included, so the grid
    covers every pixel whenever ``stride <= p``. Accepts an image or a shape
    tuple.
    """
    shape = image if isinstance(image, tuple) else np.shape(image)
    H, W = shape[:2]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if p < 1 or p > min(H, W):
        raise ValueError(f"patch size {p} does not fit a {H}x{W} image")
    rows = _grid_axis(H, p, stride)
    cols = _grid_axis(W, p, stride)
    return np.array([(r, c) for r in rows for c in cols], dtype=np.intp)


def _window_range(x: int, n: int, p: int, window: int) -> tuple[int, int]:
    lo = x - window // 2
    return max(0, lo), min(n - p, lo + window - 1)


def block_match(image, loc, p: int, M: int, window: int) -> PatchGroup:
    """Find the ``M`` patches nearest to the patch at ``loc``.

    Candidates are all stride-1 patches whose top-left corner falls in a
    ``window x window`` box centred on ``loc``, clipped to the image. Distance
    is the squared Euclidean distance between full (all-channel) patch
    vectors; ties go to the lexicographically smaller location. The reference
    patch is always column 0. When fewer than ``M`` candidates exist, all of
    them are returned.
    """
    img = as_planes(image)
    H, W = img.shape[:2]
    if M < 1:
        raise ValueError("group size M must be >= 1")
    if window < p:
        raise ValueError("search window must be at least the patch size")
    r, c = int(loc[0]), int(loc[1])
    if not (0 <= r <= H - p and 0 <= c <= W - p):
        raise ValueError(f"location {(r, c)} is outside the valid patch range")
    r0, r1 = _window_range(r, H, p, window)
    c0, c1 = _window_range(c, W, p, window)
    sub = img[r0 : r1 + p, c0 : c1 + p]
    cand = patch_vectors(sub, p).reshape(-1, img.shape[2] * p * p)
    ncols = c1 - c0 + 1
    ref_idx = (r - r0) * ncols + (c - c0)
    ref = cand[ref_idx]
    dist = ((cand - ref) ** 2).sum(axis=1)
    dist[ref_idx] = -1.0  # reference first regardless of ties
    # candidates are enumerated row-major, so a stable sort breaks ties by location
    order = np.argsort(dist, kind="stable")[:M]
    dist[ref_idx] = 0.0
    locs = np.stack([order // ncols + r0, order % ncols + c0], axis=1).astype(np.intp)
    return PatchGroup(Y=cand[order].T.copy(), locations=locs, distances=dist[order], p=p)


def init_patch_sigmas(channel_sigmas, M: int) -> SigmaTracker:
    """Pool channel stds into one level and replicate it over ``M`` patches."""
    s = np.atleast_1d(np.asarray(channel_sigmas, dtype=float))
    if s.size == 0:
        raise ValueError("need at least one channel std")
    if (s < 0).any():
        raise ValueError("noise stds must be nonnegative")
    if M < 1:
        raise ValueError("M must be >= 1")
    sigma = math.sqrt(float(np.mean(s**2)))
    return SigmaTracker(sigma, np.full(M, sigma))


def update_patch_sigmas(tracker: SigmaTracker, Y_original, X_hat) -> SigmaTracker:
    """Remaining noise per patch: ``sqrt(max(0, sigma^2 - mse_m))``.

    ``mse_m`` is the mean squared difference per vector element between the
    original noisy patch and its current estimate.
    """
    Y_original = np.asarray(Y_original, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if Y_original.shape != X_hat.shape:
        raise ValueError(f"shape mismatch {Y_original.shape} vs {X_hat.shape}")
    if Y_original.shape[1] != tracker.sigma_patches.size:
        raise ValueError("number of patches does not match the tracker")
    mse = ((Y_original - X_hat) ** 2).mean(axis=0)
    s = np.sqrt(np.maximum(0.0, tracker.sigma_global**2 - mse))
    return SigmaTracker(tracker.sigma_global, s)


def patch_sigma_map(noisy, estimate, p: int, sigma_global: float) -> np.ndarray:
    """Per-location remaining noise for every stride-1 patch of the image.

    Same formula as :func:`update_patch_sigmas`, evaluated for all patch
    locations at once. Returns an ``(H-p+1, W-p+1)`` array.
    """
    a = as_planes(noisy)
    b = as_planes(estimate)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    sq = ((a - b) ** 2).sum(axis=2)
    mse = sliding_window_view(sq, (p, p)).sum(axis=(2, 3)) / (a.shape[2] * p * p)
    return np.sqrt(np.maximum(0.0, sigma_global**2 - mse))


class Aggregator:
    """Averages patch estimates per pixel.

    Keeps a running mean rather than a sum, so a pixel whose contributions
    are all equal comes out bit-identical to them.
    """

    def __init__(self, shape, p: int):
        H, W = shape[:2]
        C = shape[2] if len(shape) == 3 else 1
        self.shape = tuple(shape)
        self.p = p
        self.mean = np.zeros((H, W, C))
        self.count = np.zeros((H, W, 1))

    def add(self, locations, X_hat) -> None:
        p = self.p
        C = self.mean.shape[2]
        X_hat = np.asarray(X_hat, dtype=float)
        if X_hat.shape[0] != C * p * p:
            raise ValueError(f"estimates have {X_hat.shape[0]} rows, expected {C * p * p}")
        blocks = X_hat.T.reshape(-1, C, p, p).transpose(0, 2, 3, 1)
        for (r, c), blk in zip(np.asarray(locations), blocks):
            n = self.count[r : r + p, c : c + p]
            n += 1
            m = self.mean[r : r + p, c : c + p]
            m += (blk - m) / n

    def result(self) -> np.ndarray:
        if (self.count == 0).any():
            r, c, _ = np.argwhere(self.count == 0)[0]
            raise ValueError(f"pixel {(int(r), int(c))} is not covered by any patch")
        return self.mean.copy().reshape(self.shape)


def aggregate(
    groups: Iterable[tuple[np.ndarray, np.ndarray]], image_shape, p: int | None = None
) -> np.ndarray:
    """Average ``(locations, X_hat)`` patch estimates into an image.

    ``p`` is inferred from the first estimate when omitted.
    """
    image_shape = tuple(image_shape)
    agg = None
    for locations, X_hat in groups:
        if agg is None:
            if p is None:
                C = image_shape[2] if len(image_shape) == 3 else 1
                p = math.isqrt(np.shape(X_hat)[0] // C)
            agg = Aggregator(image_shape, p)
        agg.add(locations, X_hat)
    if agg is None:
        raise ValueError("no patch estimates to aggregate")
    return agg.result()
