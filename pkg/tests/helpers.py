"""Synthetic fixtures and independent reference implementations for the tests."""
from __future__ import annotations

import numpy as np

from twsc.noise import ChannelSigmas, add_awgn, add_heterogeneous_noise, gradient_std_map
from twsc.patches import block_match


def piecewise_smooth(H: int = 128, W: int = 128) -> np.ndarray:
    """Grayscale scene: two flat regions, a disc, a ramp and a soft ripple."""
    s = H / 128
    yy, xx = np.mgrid[0:H, 0:W].astype(float)
    img = (
        60
        + 80 * (xx > 50 * s)
        + 60 * ((xx - 90 * s) ** 2 + (yy - 40 * s) ** 2 < (30 * s) ** 2)
        + 0.4 * yy / s
        + 20 * np.sin(xx / (9 * s))
    )
    return np.clip(img, 0, 255)


def color_scene(H: int = 64, W: int = 64) -> np.ndarray:
    s = H / 128
    base = piecewise_smooth(H, W)
    yy = np.mgrid[0:H, 0:W][0].astype(float)
    return np.stack(
        [base, np.clip(255 - 0.8 * base, 0, 255), np.clip(0.5 * base + 40 * np.cos(yy / (11 * s)), 0, 255)],
        axis=-1,
    )


HETERO_STDS = (5.8, 4.4, 5.5)


def heterogeneous_fixture(H: int = 64, seed: int = 3):
    """Color scene, channel stds 5.8/4.4/5.5 modulated by a 2:1 left-right gradient."""
    clean = color_scene(H, H)
    noisy = add_heterogeneous_noise(clean, HETERO_STDS, gradient_std_map((H, H), 2.0), seed)
    return clean, noisy, ChannelSigmas(HETERO_STDS)


def patch_groups(n_groups: int, p: int = 7, M: int = 70, sigma: float = 25.0, seed: int = 0):
    """Real block-matched color groups (``3p^2 x M``) from a noisy scene."""
    clean = color_scene(96, 96)
    noisy = add_awgn(clean, sigma, seed)
    rng = np.random.default_rng(seed)
    locs = rng.integers(0, 96 - p + 1, size=(n_groups, 2))
    return [block_match(noisy, loc, p, M, 60) for loc in locs]


def jacobi_svd(Y: np.ndarray, sweeps: int = 60, tol: float = 1e-15):
    """One-sided Jacobi SVD. Returns ``U, S, V`` with ``S`` descending."""
    U = np.array(Y, dtype=float, copy=True)
    n = U.shape[1]
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = U[:, i] @ U[:, i]
                b = U[:, j] @ U[:, j]
                g = U[:, i] @ U[:, j]
                if a * b == 0.0 or abs(g) <= tol * np.sqrt(a * b):
                    continue
                off = max(off, abs(g) / np.sqrt(a * b))
                zeta = (b - a) / (2 * g)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta)) if zeta != 0 else 1.0
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                Ui, Uj = U[:, i].copy(), U[:, j].copy()
                U[:, i], U[:, j] = c * Ui - s * Uj, s * Ui + c * Uj
                Vi, Vj = V[:, i].copy(), V[:, j].copy()
                V[:, i], V[:, j] = c * Vi - s * Vj, s * Vi + c * Vj
        if off < tol:
            break
    S = np.linalg.norm(U, axis=0)
    order = np.argsort(-S)
    S = S[order]
    U = U[:, order] / np.where(S > 0, S, 1)
    return U, S, V[:, order]


def prox_grad_solve(Y, D, w1_rows, w2, w3, iters: int = 100_000):
    """Accelerated proximal gradient on ``||W1(Y - D W3 C)W2||^2 + ||C||_1``."""
    G = D * w3[None, :]  # D W3
    Wl = w1_rows**2
    Wr = w2**2
    # Lipschitz constant of the gradient: 2 * ||W1 G||^2 * max(w2^2)
    L = 2 * np.linalg.norm(w1_rows[:, None] * G, 2) ** 2 * Wr.max()
    step = 1.0 / L
    C = np.zeros((G.shape[1], Y.shape[1]))
    Zk, t = C.copy(), 1.0
    for _ in range(iters):
        grad = -2 * G.T @ (Wl[:, None] * (Y - G @ Zk) * Wr[None, :])
        X = Zk - step * grad
        C_new = np.sign(X) * np.maximum(np.abs(X) - step, 0)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        Zk = C_new + ((t - 1) / t_new) * (C_new - C)
        C, t = C_new, t_new
    return C
