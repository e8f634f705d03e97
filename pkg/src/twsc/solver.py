"""Trilateral weighted sparse coding of one patch group, solved by ADMM.

The problem for a patch group ``Y`` with dictionary ``D`` is::

    min_C  ||W1 (Y - D W3 C) W2||_F^2 + ||C||_1

where ``C`` is the coding in the transferred variable (raw coefficients
divided row-wise by ``w3``). All three weight matrices are diagonal and are
stored as vectors; ``W1`` is stored per channel and repeated over each
channel's ``p*p`` rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    NoUniqueSolutionError,
    SvdFactors,
    SylvesterProblem,
    soft_threshold,
    solve_sylvester_fast,
    symmetric_eig,
)

__all__ = [
    "WeightTriple",
    "AdmmConfig",
    "AdmmState",
    "SolverReport",
    "build_weights",
    "wsc_weights",
    "expand_channel_weights",
    "objective",
    "admm_solve",
    "estimate_clean_patches",
    "NOISE_FLOOR",
]

NOISE_FLOOR = 1e-4


@dataclass(frozen=True)
class WeightTriple:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.ndim != 1 or v.size == 0:
                raise ValueError(f"{name} must be a non-empty vector")
            if not np.isfinite(v).all() or (v <= 0).any():
                raise ValueError(f"{name} entries must be finite and strictly positive")
            object.__setattr__(self, name, v)
        if self.w1.size not in (1, 3):
            raise ValueError(f"w1 must have 1 or 3 entries, got {self.w1.size}")
        if (np.diff(self.w3) > 0).any():
            raise ValueError("w3 must be nonincreasing")

    @property
    def n_channels(self) -> int:
        return self.w1.size

    def w1_rows(self, n_rows: int) -> np.ndarray:
        return expand_channel_weights(self.w1, n_rows)


@dataclass(frozen=True)
class AdmmConfig:
    rho0: float = 0.5
    mu: float = 1.1
    K1: int = 10
    tol: float | None = None  # None: 1e-4 * sqrt(r * M)

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not self.mu >= 1:
            raise ValueError("mu must be >= 1")
        if self.K1 < 1:
            raise ValueError("K1 must be >= 1")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")

    def tolerance(self, r: int, M: int) -> float:
        return self.tol if self.tol is not None else 1e-4 * math.sqrt(r * M)


@dataclass
class AdmmState:
    C: np.ndarray
    Z: np.ndarray
    Delta: np.ndarray
    rho: float
    k: int = 0

    @classmethod
    def zeros(cls, r: int, M: int, rho0: float) -> "AdmmState":
        return cls(np.zeros((r, M)), np.zeros((r, M)), np.zeros((r, M)), rho0, 0)


@dataclass
class SolverReport:
    iterations_used: int
    converged: bool
    final_residuals: tuple[float, float, float]
    objective_trace: list[float] = field(default_factory=list)
    residual_trace: list[tuple[float, float, float]] = field(default_factory=list)
    tol: float = 0.0
    rho: float = 0.0

    def residual_csv_rows(self) -> list[str]:
        """CSV rows ``k,primal,dC,dZ`` for convergence plots."""
        rows = ["k,c_minus_z,c_change,z_change"]
        for k, (a, b, c) in enumerate(self.residual_trace, start=1):
            rows.append(f"{k},{a:.10g},{b:.10g},{c:.10g}")
        return rows


def expand_channel_weights(w1: np.ndarray, n_rows: int) -> np.ndarray:
    w1 = np.asarray(w1, dtype=float)
    if n_rows % w1.size:
        raise ValueError(f"{n_rows} rows cannot be split into {w1.size} channel blocks")
    return np.repeat(w1, n_rows // w1.size)


def build_weights(
    sigma_channels: Sequence[float],
    sigma_patches: Sequence[float],
    svd: SvdFactors,
    p: int | None = None,
    noise_floor: float = NOISE_FLOOR,
) -> WeightTriple:
    """Weights from channel noise stds, per-patch noise stds and the group SVD.

    ``w1[c] = sigma_c ** -1/2`` and ``w2[m] = sigma_m ** -1/2`` (both floored at
    ``noise_floor``). ``w3`` is the Laplacian scale of each coefficient row:
    row ``i`` of ``diag(S) V^T`` has energy ``S_i**2`` spread over ``M`` entries,
    so its per-coefficient scale is ``S_i / sqrt(M)``.
    """
    sc = np.atleast_1d(np.asarray(sigma_channels, dtype=float))
    sm = np.atleast_1d(np.asarray(sigma_patches, dtype=float))
    if sc.size == 0 or sm.size == 0:
        raise ValueError("noise std vectors must be non-empty")
    if (sc < 0).any() or (sm < 0).any():
        raise ValueError("noise stds must be nonnegative")
    M = svd.V.shape[0]
    if sm.size != M:
        raise ValueError(f"expected {M} patch stds, got {sm.size}")
    if p is not None and svd.D.shape[0] != sc.size * p * p:
        raise ValueError(
            f"dictionary has {svd.D.shape[0]} rows, expected {sc.size}*{p}*{p}"
        )
    w1 = np.maximum(sc, noise_floor) ** -0.5
    w2 = np.maximum(sm, noise_floor) ** -0.5
    w3 = svd.S / math.sqrt(M)
    return WeightTriple(w1, w2, w3)


def wsc_weights(svd: SvdFactors, n_channels: int = 1) -> WeightTriple:
    """Baseline weights: ``W1 = W2 = I`` and the same ``w3`` as ``build_weights``."""
    M = svd.V.shape[0]
    return WeightTriple(np.ones(n_channels), np.ones(M), svd.S / math.sqrt(M))


def _check_shapes(C, Y, D, weights: WeightTriple):
    if D.shape[0] != Y.shape[0]:
        raise ValueError(f"D has {D.shape[0]} rows but Y has {Y.shape[0]}")
    if C.shape != (D.shape[1], Y.shape[1]):
        raise ValueError(f"C must have shape {(D.shape[1], Y.shape[1])}, got {C.shape}")
    if weights.w2.size != Y.shape[1] or weights.w3.size != D.shape[1]:
        raise ValueError("weights do not match the patch group")


def objective(C, Y, D, weights: WeightTriple, mode: str = "transferred") -> float:
    """Weighted sparse coding objective.

    ``mode="transferred"`` treats ``C`` as the transferred coding and returns
    ``||W1(Y - D W3 C)W2||^2 + ||C||_1``; ``mode="raw"`` treats it as the raw
    coding and returns ``||W1(Y - D C)W2||^2 + ||W3^-1 C||_1``.
    """
    C = np.asarray(C, dtype=float)
    Y = np.asarray(Y, dtype=float)
    D = np.asarray(D, dtype=float)
    _check_shapes(C, Y, D, weights)
    w1 = weights.w1_rows(Y.shape[0])
    if mode == "transferred":
        R = Y - D @ (weights.w3[:, None] * C)
        penalty = np.abs(C).sum()
    elif mode == "raw":
        R = Y - D @ C
        penalty = np.abs(C / weights.w3[:, None]).sum()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fit = ((w1[:, None] * R * weights.w2[None, :]) ** 2).sum()
    return float(fit + penalty)


def admm_solve(
    Y,
    svd: SvdFactors,
    weights: WeightTriple,
    cfg: AdmmConfig | None = None,
    callback: Callable[[AdmmState, tuple[float, float, float]], None] | None = None,
    trace_objective: bool = True,
) -> tuple[np.ndarray, SolverReport]:
    """Solve the weighted sparse coding problem of one group by ADMM.

    Parameters
    ----------
    Y : (n, M) array
        Patch group.
    svd : SvdFactors
        Dictionary ``svd.D`` (``n x r``) of the group.
    weights : WeightTriple
    cfg : AdmmConfig, optional
        Penalty schedule ``rho_k = rho0 * mu**k``, iteration cap and tolerance.
    callback : callable, optional
        Called as ``callback(state, residuals)`` after every iteration.
    trace_objective : bool
        Record the objective of every ``Z`` iterate in the report.

    Returns
    -------
    Z : (r, M) array
        Sparse transferred coding (the soft-thresholded iterate).
    report : SolverReport
    """
    cfg = cfg or AdmmConfig()
    Y = np.asarray(Y, dtype=float)
    D = svd.D
    r, M = D.shape[1], Y.shape[1]
    if D.shape[0] != Y.shape[0]:
        raise ValueError(f"D has {D.shape[0]} rows but Y has {Y.shape[0]}")
    if weights.w2.size != M or weights.w3.size != r:
        raise ValueError("weights do not match the patch group")

    w1sq = weights.w1_rows(Y.shape[0]) ** 2
    w3 = weights.w3
    DtW = D.T * w1sq[None, :]
    A = w3[:, None] * (DtW @ D) * w3[None, :]
    F = w3[:, None] * (DtW @ Y)
    # A is fixed for the whole solve; decompose it once
    eig = symmetric_eig(A)
    inv_w2sq = 1.0 / weights.w2**2
    tol = cfg.tolerance(r, M)

    state = AdmmState.zeros(r, M, cfg.rho0)
    report = SolverReport(0, False, (0.0, 0.0, 0.0), tol=tol)
    for k in range(cfg.K1):
        rho = state.rho
        B = 0.5 * rho * inv_w2sq
        E = F + (0.5 * rho * state.Z - 0.5 * state.Delta) * inv_w2sq[None, :]
        try:
            C = solve_sylvester_fast(SylvesterProblem(A, B, E), eig=eig)
        except NoUniqueSolutionError as exc:
            raise NoUniqueSolutionError(f"iteration {k + 1}: {exc}") from exc
        Z = soft_threshold(C + state.Delta / rho, 1.0 / rho)
        Delta = state.Delta + rho * (C - Z)
        if not (np.isfinite(C).all() and np.isfinite(Z).all() and np.isfinite(Delta).all()):
            raise FloatingPointError(f"non-finite ADMM iterate at iteration {k + 1}")
        res = (
            float(np.linalg.norm(C - Z)),
            float(np.linalg.norm(C - state.C)),
            float(np.linalg.norm(Z - state.Z)),
        )
        state = AdmmState(C, Z, Delta, rho * cfg.mu, k + 1)
        report.residual_trace.append(res)
        if trace_objective:
            report.objective_trace.append(objective(Z, Y, D, weights))
        if callback is not None:
            callback(state, res)
        if max(res) <= tol:
            report.converged = True
            break

    report.iterations_used = state.k
    report.final_residuals = report.residual_trace[-1]
    report.rho = state.rho
    return state.Z, report


def estimate_clean_patches(svd: SvdFactors, w3, C) -> np.ndarray:
    """Clean patch estimate ``D @ diag(w3) @ C`` from a transferred coding."""
    w3 = np.asarray(w3, dtype=float)
    C = np.asarray(C, dtype=float)
    if w3.size != svd.D.shape[1] or C.shape[0] != w3.size:
        raise ValueError("coding, w3 and dictionary sizes disagree")
    return svd.D @ (w3[:, None] * C)
