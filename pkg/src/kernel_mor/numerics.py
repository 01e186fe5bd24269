"""Dense linear-algebra primitives with explicit tolerance policies.

All cutoffs used by the balancing and learning stages come from a single
:class:`ToleranceConfig`; nothing downstream hard-codes a threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefiniteError, NotSymmetricError

SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances.

    Parameters
    ----------
    pinv_rtol : float
        Singular values below ``pinv_rtol * sigma_max`` are treated as zero.
    psd_clip : float
        Floor applied to eigenvalues before taking PSD square roots.
    jitter : float
        Diagonal regularizer added before factorizing kernel matrices.
    """

    pinv_rtol: float = 1e-10
    psd_clip: float = 0.0
    jitter: float = 1e-3

    def __post_init__(self):
        for name in ("pinv_rtol", "psd_clip", "jitter"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a nonnegative finite number, got {value!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self):
        return {"pinv_rtol": self.pinv_rtol, "psd_clip": self.psd_clip, "jitter": self.jitter}


DEFAULT_TOL = ToleranceConfig()


def _check_symmetric(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A)
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (A + A.T)


def psd_eig(A, tol: ToleranceConfig = DEFAULT_TOL):
    """Symmetric eigendecomposition with the spectrum clipped at ``tol.psd_clip``.

    Returns ``(w, Q)`` with ``w`` ascending.
    """
    A = _check_symmetric(A)
    w, Q = np.linalg.eigh(A)
    return np.maximum(w, tol.psd_clip), Q


def psd_sqrt(A, tol: ToleranceConfig = DEFAULT_TOL):
    """Symmetric square root ``Q diag(sqrt(w)) Q^T`` of a clipped PSD matrix."""
    w, Q = psd_eig(A, tol)
    return (Q * np.sqrt(w)) @ Q.T


def psd_sqrt_pair(A, tol: ToleranceConfig = DEFAULT_TOL):
    """Return ``(sqrt(A), sqrt(A)^+)`` from one eigendecomposition.

    Eigenvalues at or below the rounding floor ``n * eps * max(w)`` are
    zeroed first, so that noise directions of a rank-deficient ``A`` do not
    leak into ``sqrt(A)``. The pseudoinverse keeps the square-root eigenvalues
    above ``tol.pinv_rtol`` times the largest one.
    """
    w, Q = psd_eig(A, tol)
    if w.size:
        w = np.where(w > w.size * np.finfo(float).eps * w.max(), w, 0.0)
    root = np.sqrt(w)
    S = (Q * root) @ Q.T
    top = root.max() if root.size else 0.0
    keep = root > tol.pinv_rtol * top
    inv_root = np.zeros_like(root)
    inv_root[keep] = 1.0 / root[keep]
    S_pinv = (Q * inv_root) @ Q.T
    return S, S_pinv


def reduced_svd(A):
    """Thin SVD ``A = U diag(s) V^T`` with ``s`` descending."""
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return U, s, Vt.T


def pinv(A, tol: ToleranceConfig = DEFAULT_TOL):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return A.T.copy()
    U, s, V = reduced_svd(A)
    keep = s > tol.pinv_rtol * s[0] if s.size else s.astype(bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (V * s_inv) @ U.T


def jittered_cholesky(A, tol: ToleranceConfig = DEFAULT_TOL):
    """Lower Cholesky factor of ``A + tol.jitter * I``."""
    A = _check_symmetric(A)
    B = A + tol.jitter * np.eye(A.shape[0])
    try:
        return np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(np.linalg.eigvalsh(B).min()) from None
