"""Image denoising by trilateral weighted sparse coding of nonlocal patch groups."""
from .metrics import QualityScore, psnr, score, ssim
from .noise import ChannelSigmas, add_awgn, add_heterogeneous_noise, estimate_sigmas
from .pipeline import DenoiseConfig, DenoiseError, RunReport, denoise, params_for_sigma, resolve_config
from .solver import AdmmConfig, WeightTriple, admm_solve, build_weights, wsc_weights

__all__ = [
    "AdmmConfig",
    "ChannelSigmas",
    "DenoiseConfig",
    "DenoiseError",
    "QualityScore",
    "RunReport",
    "WeightTriple",
    "add_awgn",
    "add_heterogeneous_noise",
    "admm_solve",
    "build_weights",
    "denoise",
    "estimate_sigmas",
    "params_for_sigma",
    "psnr",
    "resolve_config",
    "score",
    "ssim",
    "wsc_weights",
]
