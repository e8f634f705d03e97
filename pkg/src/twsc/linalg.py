"""Dense linear-algebra kernels used by the per-group sparse coding solver.

Everything here is a pure function of its inputs. The Sylvester solvers only
handle the structure the solver produces: a symmetric ``A`` and a diagonal
``B`` stored as a vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdFactors",
    "SylvesterProblem",
    "economy_svd",
    "soft_threshold",
    "symmetric_eig",
    "solve_sylvester_naive",
    "solve_sylvester_fast",
    "check_unique_solution",
    "NoUniqueSolutionError",
    "SVD_FLOOR_RATIO",
    "NAIVE_SIZE_LIMIT",
]

SVD_FLOOR_RATIO = 1e-6
# absolute floor, only reached when the input matrix is identically zero
SVD_FLOOR_MIN = 1e-12
NAIVE_SIZE_LIMIT = 2000
SYMMETRY_TOL = 1e-10


class NoUniqueSolutionError(ArithmeticError):
    """Raised when a Sylvester equation has no unique solution."""


@dataclass(frozen=True)
class SvdFactors:
    """Economy SVD ``Y ~= D @ diag(S) @ V.T`` with floored singular values."""

    D: np.ndarray
    S: np.ndarray
    V: np.ndarray
    floored: bool = False

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.D * self.S) @ self.V.T


@dataclass(frozen=True)
class SylvesterProblem:
    """``A @ C + C @ diag(B) = E`` with ``A`` symmetric and ``B`` a positive vector."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float).ravel()
        E = np.asarray(self.E, dtype=float)
        if E.ndim == 1:
            E = E.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if E.shape != (A.shape[0], B.shape[0]):
            raise ValueError(
                f"E must have shape {(A.shape[0], B.shape[0])}, got {E.shape}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)

    def residual(self, C: np.ndarray) -> float:
        """Relative residual ``||AC + CB - E||_F / max(1, ||E||_F)``."""
        R = self.A @ C + C * self.B[None, :] - self.E
        return float(np.linalg.norm(R) / max(1.0, np.linalg.norm(self.E)))


def _require_finite(X: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(X)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} has a non-finite entry {X[idx]!r} at index {idx}")


def _require_symmetric(A: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("A is not symmetric within tolerance")


def economy_svd(Y: np.ndarray, floor_ratio: float = SVD_FLOOR_RATIO) -> SvdFactors:
    """Economy SVD of a patch matrix, with singular values floored.

    Parameters
    ----------
    Y : (n, M) array
        Patch matrix, one vectorized patch per column.
    floor_ratio : float
        Singular values below ``floor_ratio * max(S)`` are raised to that
        value so that ``1 / S`` is always defined.

    Returns
    -------
    SvdFactors
        ``D`` is ``n x r``, ``S`` has ``r`` entries and ``V`` is ``M x r``
        with ``r = min(n, M)``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise ValueError(f"Y must be a non-empty matrix, got shape {Y.shape}")
    _require_finite(Y, "Y")
    D, S, Vt = np.linalg.svd(Y, full_matrices=False)
    floor = max(floor_ratio * float(S[0]), SVD_FLOOR_MIN)
    floored = bool((S < floor).any())
    S = np.maximum(S, floor)
    return SvdFactors(D=D, S=S, V=Vt.T, floored=floored)


def soft_threshold(X, lam: float):
    """Elementwise ``sign(x) * max(|x| - lam, 0)``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    X = np.asarray(X, dtype=float)
    return np.sign(X) * np.maximum(np.abs(X) - lam, 0.0)


def symmetric_eig(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of ``(A + A.T) / 2``; returns ``(eigenvalues, U)``."""
    A = np.asarray(A, dtype=float)
    _require_symmetric(A)
    return np.linalg.eigh(0.5 * (A + A.T))


def _eig_tol(evals: np.ndarray, n: int) -> float:
    # absolute accuracy of symmetric eigenvalues: about n * eps * ||A||
    return n * np.finfo(float).eps * float(np.abs(evals).max(initial=0.0))


def check_unique_solution(A: np.ndarray, B) -> bool:
    """True iff the spectra of ``A`` and ``-diag(B)`` are disjoint.

    A positive semidefinite ``A`` (up to rounding) with strictly positive
    ``B`` is always uniquely solvable, since every ``lambda_i + b_m > 0``.
    Otherwise each gap ``|lambda_i + b_m|`` must exceed the eigenvalue
    accuracy.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if B.size == 0:
        raise ValueError("B must have at least one entry")
    _require_symmetric(A)
    evals = np.linalg.eigvalsh(0.5 * (A + A.T))
    tol = _eig_tol(evals, A.shape[0])
    if (B > 0).all() and evals.min(initial=0.0) >= -tol:
        return True
    # eigenvalues of the Kronecker-lifted operator are lambda_i + b_m
    gaps = np.abs(evals[:, None] + B[None, :])
    scale = max(tol, B.size * np.finfo(float).eps * float(np.abs(B).max()))
    return bool(gaps.min(initial=np.inf) > scale)


def solve_sylvester_naive(prob: SylvesterProblem) -> np.ndarray:
    """Reference solver through the Kronecker-lifted linear system.

    Builds ``(I_M kron A + diag(B) kron I_r) vec(C) = vec(E)`` explicitly, so
    it is only meant as a test oracle for small problems.
    """
    r, M = prob.E.shape
    if r * M > NAIVE_SIZE_LIMIT:
        raise ValueError(
            f"naive Sylvester solve limited to r*M <= {NAIVE_SIZE_LIMIT}, got {r * M}"
        )
    if not check_unique_solution(prob.A, prob.B):
        raise NoUniqueSolutionError("no unique solution: spectra of A and -B intersect")
    K = np.kron(np.eye(M), prob.A) + np.kron(np.diag(prob.B), np.eye(r))
    vec_c = np.linalg.solve(K, prob.E.reshape(-1, order="F"))
    return vec_c.reshape((r, M), order="F")


def solve_sylvester_fast(
    prob: SylvesterProblem,
    eig: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Exact solve using one eigendecomposition of ``A``.

    With ``A = U diag(lam) U^T`` and ``B`` diagonal, the rotated unknown
    ``U^T C`` satisfies an elementwise equation, so the cost after the
    eigendecomposition is two ``r x r`` by ``r x M`` products.

    ``eig`` may carry a precomputed ``symmetric_eig(prob.A)`` so callers that
    solve many right-hand sides with the same ``A`` decompose it once.
    """
    if eig is None:
        eig = symmetric_eig(prob.A)
    lam, U = eig
    # A is PSD by precondition; eigenvalues negative only by rounding are zero
    tol = _eig_tol(lam, lam.size)
    lam = np.where((lam < 0) & (lam >= -tol), 0.0, lam)
    denom = lam[:, None] + prob.B[None, :]
    if not (denom > 0).all():
        raise NoUniqueSolutionError(
            "no unique solution: nonpositive eigenvalue sum "
            f"{float(denom.min()):.3e} in the rotated system"
        )
    return U @ ((U.T @ prob.E) / denom)
