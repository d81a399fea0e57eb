"""Primitives for symmetric positive-semidefinite matrices.

Every routine goes through one symmetric eigendecomposition so that square
roots and pseudo-inverses agree on the numerical rank of their argument.
"""

import numpy as np

from .errors import NotPSD

#: eigenvalues above -NEG_TOL * spectral_norm are treated as round-off
NEG_TOL = 1e-9
#: eigenvalues below RANK_TOL * largest eigenvalue are treated as zero
RANK_TOL = 1e-10


def symmetrize(M):
    """``(M + M^T) / 2``; stacked ``(..., n, n)`` arrays are handled per matrix."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def is_symmetric(M, tol=1e-10):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = 1.0 + (np.abs(M).max() if M.size else 0.0)
    return bool(np.abs(M - M.T).max(initial=0.0) <= tol * scale)


def _as_square(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def psd_eigh(M, neg_tol=NEG_TOL):
    """Eigendecomposition of a symmetric PSD matrix with round-off repair.

    Returns ``(w, V)`` with ``w >= 0``. Raises :class:`NotPSD` if an
    eigenvalue is below ``-neg_tol`` times the spectral norm.
    """
    M = _as_square(M)
    w, V = np.linalg.eigh(symmetrize(M))
    norm = np.abs(w).max(initial=0.0)
    if w.size and w[0] < -neg_tol * norm:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below tolerance (norm {norm:.3e})")
    return np.clip(w, 0.0, None), V


def _rank_mask(w, rank_tol):
    top = w.max(initial=0.0)
    if rank_tol is None:
        rank_tol = RANK_TOL * top
    return w > rank_tol if top > 0 else np.zeros_like(w, dtype=bool)


def sqrt_psd(M):
    """Principal square root of a PSD matrix."""
    w, V = psd_eigh(M)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def pinv_psd(M, rank_tol=None):
    """Moore-Penrose inverse of a PSD matrix.

    ``rank_tol`` is an absolute eigenvalue cut-off; by default it is
    ``RANK_TOL`` times the largest eigenvalue.
    """
    w, V = psd_eigh(M)
    keep = _rank_mask(w, rank_tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return symmetrize((V * inv) @ V.T)


def sqrt_and_pinv_sqrt(M, rank_tol=None):
    """Return ``(M^{1/2}, (M^{1/2})^+)`` from a single decomposition."""
    w, V = psd_eigh(M)
    keep = _rank_mask(w, rank_tol)
    root = np.sqrt(w)
    root[~keep] = 0.0
    inv_root = np.zeros_like(w)
    inv_root[keep] = 1.0 / root[keep]
    return symmetrize((V * root) @ V.T), symmetrize((V * inv_root) @ V.T)


def clamp_psd(M):
    """Frobenius-nearest PSD matrix to the symmetric matrix ``M``."""
    M = _as_square(M)
    w, V = np.linalg.eigh(symmetrize(M))
    if w.size and w[0] >= 0.0:
        return symmetrize(M)
    return symmetrize((V * np.clip(w, 0.0, None)) @ V.T)


def min_eig(M):
    M = _as_square(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def is_psd(M, tol=0.0):
    """True when the smallest eigenvalue is at least ``-tol``."""
    return min_eig(M) >= -tol


def psd_factor(M):
    """Return ``L`` with ``L @ L.T == M`` built from the eigendecomposition.

    Works for singular covariances, which a Cholesky factorization rejects.
    """
    w, V = psd_eigh(M)
    return V * np.sqrt(w)


def image_contained(Xsub, Xsup, tol=1e-8):
    """Check ``im(Xsub) ⊆ im(Xsup)`` for PSD arguments."""
    Xsub = _as_square(Xsub)
    Xsup = _as_square(Xsup)
    nrm = np.linalg.norm(Xsub, 2)
    if nrm == 0.0:
        return True
    proj = Xsup @ pinv_psd(Xsup)
    resid = Xsub - proj @ Xsub
    return bool(np.linalg.norm(resid, 2) <= tol * nrm)
