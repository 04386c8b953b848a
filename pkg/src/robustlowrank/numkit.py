"""Dense linear-algebra and order-statistics kernels.

Small dense problems only (hundreds of rows): everything is backed by
LAPACK through numpy, with a deterministic sign convention applied to
singular/eigen vectors so repeated runs produce identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = ["SvdResult", "svd", "sym_eig_top", "sample_quantile", "as_matrix"]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-d float array with finite entries."""
    M = np.asarray(a, dtype=np.float64)
    if M.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {M.shape}")
    if M.shape[0] < 1 or M.shape[1] < 1:
        raise InputError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} contains non-finite entries")
    return M


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-|entry| is positive.

    Ties are broken by the lowest index (``argmax`` convention).  Operates
    in place and returns the array.
    """
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return vectors


@dataclass
class SvdResult:
    """Top-k singular triplets: ``M ≈ U @ diag(singular_values) @ V.T``.

    ``V``'s columns carry the sign convention (largest-magnitude entry
    positive); ``U`` carries the compensating sign so the product is
    unchanged.
    """

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def svd(M, k: int) -> SvdResult:
    """Top-``k`` singular triplets of a dense matrix.

    The returned triplets minimise the Frobenius distance to ``M`` over
    rank-``k`` matrices.  Singular values are sorted descending.
    """
    M = as_matrix(M)
    n, m = M.shape
    if not 1 <= k <= min(n, m):
        raise InputError(f"k={k} outside [1, {min(n, m)}]")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U = np.ascontiguousarray(U[:, :k])
    s = s[:k].copy()
    V = np.ascontiguousarray(Vt[:k].T)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    V *= signs
    U *= signs
    return SvdResult(U=U, singular_values=s, V=V)


def sym_eig_top(S, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` eigenpairs (descending) of a symmetric matrix.

    Returns ``(values, vectors)`` with orthonormal columns.  Within a
    degenerate eigenvalue block the basis is arbitrary; callers must
    compare projectors, not individual vectors.
    """
    S = as_matrix(S, "symmetric matrix")
    m = S.shape[0]
    if S.shape[1] != m:
        raise InputError(f"matrix must be square, got {S.shape}")
    if not 1 <= k <= m:
        raise InputError(f"k={k} outside [1, {m}]")
    asym = np.abs(S - S.T).max()
    if asym > 1e-10 * max(1.0, np.abs(S).max()):
        raise InputError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    S = (S + S.T) / 2.0
    w, V = np.linalg.eigh(S)
    values = w[::-1][:k].copy()
    vectors = np.ascontiguousarray(V[:, ::-1][:, :k])
    fix_signs(vectors)
    return values, vectors


def quantile_rank(tau: float, n: int) -> int:
    """1-based order-statistic rank ⌈tau*n⌉ with a float-fuzz guard.

    The guard keeps products like 0.1*20 (= 2.0000000000000004 in binary)
    from rounding the rank up.
    """
    k = int(math.ceil(tau * n - 1e-9))
    return min(max(k, 1), n)


def sample_quantile(x, tau: float) -> float:
    """⌈tau*n⌉-th order statistic (left-continuous empirical quantile)."""
    if not 0.0 < tau < 1.0:
        raise InputError(f"tau={tau} outside (0, 1)")
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("empty sequence")
    if not np.all(np.isfinite(x)):
        raise InputError("sequence contains non-finite values")
    return float(np.sort(x)[quantile_rank(tau, x.size) - 1])
