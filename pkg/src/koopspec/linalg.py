"""Dense real linear-algebra kernels.

Everything here works on float64 numpy arrays and is a pure function of its
inputs. LAPACK (through numpy) does the heavy lifting for QR, SVD and the
symmetric eigenproblem; the wrappers pin down shapes, sign conventions and
error behaviour.
"""

from __future__ import annotations

import numpy as np


class LinAlgError(ValueError):
    """Raised on shape mismatches, rank deficiency or non-symmetric input."""


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise LinAlgError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise LinAlgError("matrix has non-finite entries")
    return A


def matmul(A, B) -> np.ndarray:
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise LinAlgError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return A @ B


def qr_orthonormalize(A, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis for the column span of ``A`` (d x r, r <= d).

    Householder QR with the sign of each column flipped so that the
    triangular factor has a nonnegative diagonal; this makes the result a
    deterministic function of ``A`` and leaves orthonormal inputs unchanged.
    """
    A = as_matrix(A)
    d, r = A.shape
    if r > d:
        raise LinAlgError(f"need r <= d, got shape {A.shape}")
    Q, R = np.linalg.qr(A, mode="reduced")
    diag = np.diag(R)
    if np.any(np.abs(diag) < tol):
        raise LinAlgError("rank-deficient input to QR retraction")
    signs = np.where(diag < 0.0, -1.0, 1.0)
    return Q * signs


def singular_values(A) -> np.ndarray:
    """Singular values in descending order."""
    A = as_matrix(A)
    if A.size == 0:
        return np.zeros(0)
    try:
        s = np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(f"SVD did not converge: {exc}") from exc
    return np.sort(s)[::-1]


def spectral_norm(A) -> float:
    s = singular_values(A)
    return float(s[0]) if s.size else 0.0


def spectral_radius_estimate(A, k: int = 64) -> float:
    """Gelfand estimate ``||A^k||_2 ** (1/k)`` of the spectral radius.

    The estimate never undershoots the norm bound in the wrong direction:
    it is at most ``||A||_2`` and converges to ``rho(A)`` from above as ``k``
    grows (for non-normal ``A`` the approach can be slow). Powers are
    renormalised at every step with the log-scale tracked separately, so
    matrices with radius far from 1 neither overflow nor underflow.
    """
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise LinAlgError(f"spectral radius needs a square matrix, got {A.shape}")
    if k < 1:
        raise LinAlgError("k must be >= 1")
    M = np.eye(A.shape[0])
    log_scale = 0.0
    for _ in range(k):
        M = A @ M
        nrm = np.linalg.norm(M)
        if nrm == 0.0:
            return 0.0
        M /= nrm
        log_scale += np.log(nrm)
    return float(np.exp((log_scale + np.log(spectral_norm(M))) / k))


def sym_max_eig(M, tol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise LinAlgError(f"expected a square matrix, got {M.shape}")
    if np.linalg.norm(M - M.T) >= tol:
        raise LinAlgError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
