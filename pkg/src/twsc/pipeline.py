"""Whole-image denoising: the outer loop over grouping, coding and aggregation."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .linalg import economy_svd
from .metrics import psnr
from .noise import ChannelSigmas, estimate_sigmas
from .patches import (
    Aggregator,
    as_planes,
    block_match,
    extract_patch_grid,
    patch_sigma_map,
)
from .solver import (
    NOISE_FLOOR,
    AdmmConfig,
    WeightTriple,
    admm_solve,
    build_weights,
    estimate_clean_patches,
    wsc_weights,
)

__all__ = [
    "DenoiseConfig",
    "DenoiseError",
    "IterationStats",
    "RunReport",
    "params_for_sigma",
    "resolve_config",
    "denoise",
]

log = logging.getLogger(__name__)

# (upper sigma bound, (p, M, K2))
SCHEDULE = (
    (20.0, (7, 70, 8)),
    (40.0, (8, 90, 12)),
    (60.0, (8, 120, 12)),
    (100.0, (9, 140, 14)),
)


class DenoiseError(RuntimeError):
    """A per-group solve failed; the message carries the iteration and location."""


def params_for_sigma(sigma: float) -> tuple[int, int, int]:
    """Patch size, group size and outer iteration count for a noise level."""
    if not sigma > 0:
        raise ValueError(f"noise level must be positive, got {sigma}")
    for upper, params in SCHEDULE:
        if sigma <= upper:
            return params
    return SCHEDULE[-1][1]


@dataclass(frozen=True)
class DenoiseConfig:
    p: int = 7
    M: int = 70
    K2: int = 8
    K1: int = 10
    rho0: float = 0.5
    mu: float = 1.1
    tol: float | None = None
    stride: int = 3
    window: int = 60
    mode: Literal["color", "grayscale"] = "color"
    sigma_override: ChannelSigmas | None = None
    wsc: bool = False
    workers: int = 1
    noise_floor: float = NOISE_FLOOR

    def __post_init__(self):
        if self.p < 1 or self.M < 1 or self.K1 < 1 or self.K2 < 1:
            raise ValueError("p, M, K1 and K2 must all be >= 1")
        if self.window < self.p:
            raise ValueError("search window must be at least the patch size")
        if self.stride < 1 or self.workers < 1:
            raise ValueError("stride and workers must be >= 1")
        if self.stride > self.p:
            raise ValueError(f"stride {self.stride} > patch size {self.p} leaves pixels uncovered")
        if self.mode not in ("color", "grayscale"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def for_sigma(cls, sigma: float, **overrides) -> "DenoiseConfig":
        p, M, K2 = params_for_sigma(sigma)
        return cls(**{"p": p, "M": M, "K2": K2, **overrides})

    @property
    def admm(self) -> AdmmConfig:
        return AdmmConfig(rho0=self.rho0, mu=self.mu, K1=self.K1, tol=self.tol)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sigma_override"] = None if self.sigma_override is None else list(self.sigma_override.values)
        return d


@dataclass
class IterationStats:
    k: int
    mean_sigma_m: float
    converged_fraction: float
    wall_seconds: float
    psnr_db: float | None = None


@dataclass
class RunReport:
    sigmas: ChannelSigmas
    config: DenoiseConfig
    n_groups: int = 0
    iterations: list[IterationStats] = field(default_factory=list)
    wall_seconds: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "mean_sigma_m", "converged_fraction", "wall_seconds", "psnr_db"])
            for it in self.iterations:
                w.writerow([
                    it.k,
                    f"{it.mean_sigma_m:.6f}",
                    f"{it.converged_fraction:.6f}",
                    f"{it.wall_seconds:.3f}",
                    "" if it.psnr_db is None else f"{it.psnr_db:.4f}",
                ])


# called as sink(k, reference_location, weights) for every group of the last outer iteration
WeightSink = Callable[[int, tuple[int, int], WeightTriple], None]


def resolve_config(noisy, sigmas: ChannelSigmas | None = None, **overrides) -> DenoiseConfig:
    """Config whose (p, M, K2) follow the schedule for the pooled noise level."""
    if sigmas is None:
        sigmas = estimate_sigmas(noisy)
    pooled = sigmas.pooled
    base = DenoiseConfig.for_sigma(pooled) if pooled > 0 else DenoiseConfig()
    return replace(base, sigma_override=sigmas, **overrides)


def _solve_group(y_k, sigma_map, loc, channel_sigmas, cfg: DenoiseConfig, admm_cfg: AdmmConfig):
    group = block_match(y_k, loc, cfg.p, cfg.M, cfg.window)
    svd = economy_svd(group.Y)
    if cfg.wsc:
        weights = wsc_weights(svd, len(channel_sigmas))
    else:
        sm = sigma_map[group.locations[:, 0], group.locations[:, 1]]
        weights = build_weights(channel_sigmas, sm, svd, cfg.p, cfg.noise_floor)
    Z, rep = admm_solve(group.Y, svd, weights, admm_cfg, trace_objective=False)
    X = estimate_clean_patches(svd, weights.w3, Z)
    return group.locations, X, rep.converged, weights


def _denoise_planes(noisy, sigmas: ChannelSigmas, cfg: DenoiseConfig, reference, weight_sink):
    H, W, C = noisy.shape
    if len(sigmas) != C:
        raise ValueError(f"{len(sigmas)} channel stds for a {C}-channel image")
    if min(H, W) < cfg.p:
        raise ValueError(f"image {H}x{W} is smaller than the patch size {cfg.p}")
    sigma = sigmas.pooled
    channel_sigmas = np.array(sigmas.values)
    locs = extract_patch_grid((H, W), cfg.p, cfg.stride)
    sigma_map = np.full((H - cfg.p + 1, W - cfg.p + 1), sigma)
    admm_cfg = cfg.admm
    report = RunReport(sigmas, cfg, n_groups=len(locs))
    x = noisy.copy()
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    t_start = time.perf_counter()
    try:
        for k in range(1, cfg.K2 + 1):
            t0 = time.perf_counter()
            y_k = x
            agg = Aggregator(noisy.shape, cfg.p)
            converged = 0

            def work(loc, y_k=y_k, sigma_map=sigma_map, k=k):
                try:
                    return _solve_group(y_k, sigma_map, loc, channel_sigmas, cfg, admm_cfg)
                except (ArithmeticError, ValueError) as exc:
                    raise DenoiseError(
                        f"outer iteration {k}, patch {tuple(int(v) for v in loc)}: {exc}"
                    ) from exc

            results = pool.map(work, locs, chunksize=16) if pool else map(work, locs)
            # results arrive in grid order whatever the worker count
            for loc, (locations, X, conv, weights) in zip(locs, results):
                agg.add(locations, X)
                converged += conv
                if weight_sink is not None and k == cfg.K2:
                    weight_sink(k, (int(loc[0]), int(loc[1])), weights)
            x = agg.result()
            sigma_map = patch_sigma_map(noisy, x, cfg.p, sigma)
            stats = IterationStats(
                k=k,
                mean_sigma_m=float(sigma_map.mean()),
                converged_fraction=converged / len(locs),
                wall_seconds=time.perf_counter() - t0,
                psnr_db=None if reference is None else psnr(np.clip(x, 0, 255), reference),
            )
            report.iterations.append(stats)
            log.info("outer iteration %d/%d: mean sigma_m %.3f, %.1fs", k, cfg.K2,
                     stats.mean_sigma_m, stats.wall_seconds)
    finally:
        if pool is not None:
            pool.shutdown()
    report.wall_seconds = time.perf_counter() - t_start
    return x, report


def _merge_reports(reports: list[RunReport], sigmas: ChannelSigmas, cfg: DenoiseConfig) -> RunReport:
    merged = RunReport(sigmas, cfg, n_groups=sum(r.n_groups for r in reports))
    merged.wall_seconds = sum(r.wall_seconds for r in reports)
    for rows in zip(*(r.iterations for r in reports)):
        merged.iterations.append(IterationStats(
            k=rows[0].k,
            mean_sigma_m=float(np.mean([s.mean_sigma_m for s in rows])),
            converged_fraction=float(np.mean([s.converged_fraction for s in rows])),
            wall_seconds=sum(s.wall_seconds for s in rows),
        ))
    return merged


def denoise(
    noisy,
    cfg: DenoiseConfig,
    reference=None,
    weight_sink: WeightSink | None = None,
) -> tuple[np.ndarray, RunReport]:
    """Denoise an image with ``cfg.K2`` rounds of group-wise weighted sparse coding.

    Each round groups similar patches of the previous round's estimate, codes
    every group, and averages the group estimates back into an image. The
    per-patch noise levels are then refreshed against the original noisy
    input. Channel noise stds come from ``cfg.sigma_override`` or are
    estimated once from the input.

    In ``grayscale`` mode a multi-channel image is processed one channel at a
    time. The returned image is unclamped; ``reference``, when given, is used
    for per-round PSNR in the report.
    """
    img = np.asarray(noisy, dtype=float)
    planes = as_planes(img)
    sigmas = cfg.sigma_override or estimate_sigmas(planes)
    ref = None if reference is None else as_planes(reference)

    if cfg.mode == "grayscale" and planes.shape[2] > 1:
        if len(sigmas) == 1:
            sigmas = ChannelSigmas(sigmas.values * planes.shape[2], sigmas.source)
        outs, reports = [], []
        for c in range(planes.shape[2]):
            out, rep = _denoise_planes(
                planes[:, :, c:c + 1], ChannelSigmas((sigmas.values[c],), sigmas.source),
                cfg, None, weight_sink,
            )
            outs.append(out)
            reports.append(rep)
        x = np.concatenate(outs, axis=2)
        report = _merge_reports(reports, sigmas, cfg)
        if ref is not None and report.iterations:
            report.iterations[-1].psnr_db = psnr(np.clip(x, 0, 255), ref)
    else:
        x, report = _denoise_planes(planes, sigmas, cfg, ref, weight_sink)
    return x.reshape(img.shape), report
