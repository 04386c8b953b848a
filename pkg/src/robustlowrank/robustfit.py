"""Robust low-rank fitting pipeline.

Three stages produce a robust SVD of a data matrix:

* Step 0 searches random row subsets for an initial column basis: each
  candidate subset contributes its top right singular vectors, every row
  of the full matrix is robust-fitted against them, and the basis with
  the smallest total robust loss wins.
* Step 1 trims rows whose squared residual norms fall outside the
  (alpha, 1-alpha) quantile band and re-estimates the column basis by
  weighted least squares (equivalently, the top eigenvectors of the
  trimmed second-moment matrix).
* Step 2 refits all row effects robustly against the improved basis.

A final SVD of the fitted approximant re-orthogonalises the output and
yields its singular values.  All randomness comes from purpose-labelled
Philox substreams of the config seed, so results are reproducible and
independent of execution order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, _rng, numkit
from .errors import DegenerateDataError, InputError
from .loss import LossSpec
from .numkit import as_matrix, fix_signs, quantile_rank, sample_quantile
from .rowfit import IRLS_PHASE, MAX_ITER, fit_all_rows

__all__ = [
    "TrimConfig",
    "RobustFit",
    "subset_initial",
    "residual_sqnorms",
    "trim_weights",
    "weighted_column_estimate",
    "robust_svd",
]


@dataclass(frozen=True)
class TrimConfig:
    """Everything governing the subset search and trimming stages.

    ``alpha_star`` sets the subset size ceil((1-alpha_star)*n); ``alpha``
    is the trimming proportion for the weights.  ``alpha = 0`` is the
    documented no-trimming mode (all weights one).  With ``subset_all``
    the subset search degenerates to the single full-row subset, which
    together with ``alpha = 0`` and the least-squares loss reproduces the
    classical truncated SVD.
    """

    rank: int
    loss: LossSpec
    alpha_star: float = 0.3
    alpha: float = 0.1
    n_subsets: int = 100
    seed: int = 0
    subset_all: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise InputError(f"rank must be >= 1, got {self.rank}")
        if not self.subset_all and not 0.1 <= self.alpha_star <= 0.5:
            raise InputError(f"alpha_star={self.alpha_star} outside [0.1, 0.5]")
        if not 0.0 <= self.alpha <= self.alpha_star:
            raise InputError(f"alpha={self.alpha} outside [0, alpha_star={self.alpha_star}]")
        if self.alpha >= 0.5:
            raise InputError(f"alpha={self.alpha} must be below 0.5")
        if self.n_subsets < 1:
            raise InputError("n_subsets must be >= 1")

    def subset_size(self, n: int) -> int:
        if self.subset_all:
            return n
        return int(math.ceil((1.0 - self.alpha_star) * n - 1e-9))


@dataclass
class RobustFit:
    """Rank-r robust decomposition: ``Theta @ Phi.T`` approximates Y."""

    Theta: np.ndarray
    Phi: np.ndarray
    singular_values: np.ndarray
    weights: np.ndarray
    residual_sqnorms: np.ndarray
    chosen_subset: np.ndarray

    @property
    def approximant(self) -> np.ndarray:
        return self.Theta @ self.Phi.T


def _draw_subsets(n: int, size: int, cfg: TrimConfig) -> np.ndarray:
    """Subset index matrix (n_subsets, size); rows sorted for determinism.

    Subset i draws from its own jumped substream, so evaluation order
    (serial or parallel) cannot change the draws.
    """
    if cfg.subset_all:
        return np.arange(n, dtype=np.int64)[None, :]
    gens = _rng.jumped_substreams(cfg.seed, _rng.SUBSETS, cfg.n_subsets)
    subsets = np.empty((cfg.n_subsets, size), dtype=np.int64)
    for i, gen in enumerate(gens):
        subsets[i] = np.sort(gen.choice(n, size=size, replace=False))
    return subsets


def _candidate_bases(Y: np.ndarray, subsets: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-r right singular vectors of each subset matrix.

    Computed from the subset second-moment (Gram) matrices with one
    batched eigendecomposition.  Returns (bases (G, m, r), skip mask);
    rank-deficient subsets are flagged for skipping.
    """
    G, size = subsets.shape
    m = Y.shape[1]
    sub = Y[subsets]                      # (G, size, m)
    grams = np.matmul(sub.transpose(0, 2, 1), sub)
    w, V = np.linalg.eigh(grams)          # ascending eigenvalues
    w = w[:, ::-1]
    V = V[:, :, ::-1]
    # eigenvalues of Y*^T Y* are squared singular values
    tol = (max(size, m) * np.finfo(np.float64).eps) ** 2
    skip = w[:, r - 1] <= tol * np.maximum(w[:, 0], 0.0)
    bases = np.ascontiguousarray(V[:, :, :r])
    idx = np.argmax(np.abs(bases), axis=1)
    signs = np.sign(np.take_along_axis(bases, idx[:, None, :], axis=1))
    signs[signs == 0] = 1.0
    bases *= signs
    return bases, skip


def _subset_search(Y: np.ndarray, cfg: TrimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Step 0: returns (initial basis m x r, chosen row indices)."""
    n, m = Y.shape
    r = cfg.rank
    size = cfg.subset_size(n)
    if size < r + 1:
        raise InputError(f"subset size {size} below rank+1={r + 1}; lower alpha_star or rank")
    if size > n:
        raise InputError(f"subset size {size} exceeds row count {n}")
    subsets = _draw_subsets(n, size, cfg)
    bases, skip = _candidate_bases(Y, subsets, r)
    total, _conv, _ok = _kernels.score_candidates(
        Y, bases, skip, cfg.loss.code, cfg.loss.c, MAX_ITER, IRLS_PHASE
    )
    best = int(np.argmin(total))
    if not np.isfinite(total[best]):
        raise DegenerateDataError("every candidate subset was rank-deficient")
    return np.ascontiguousarray(bases[best]), subsets[best].copy()


def subset_initial(Y, cfg: TrimConfig) -> np.ndarray:
    """Initial robust column basis from the best of the random subsets."""
    Y = as_matrix(Y, "Y")
    phi, _rows = _subset_search(Y, cfg)
    return phi


def residual_sqnorms(Y, Phi) -> np.ndarray:
    """Squared norms of the rows' residuals off the span of Phi."""
    Y = as_matrix(Y, "Y")
    Phi = np.asarray(Phi, dtype=np.float64)
    if Phi.ndim == 1:
        Phi = Phi[:, None]
    gram = Phi.T @ Phi
    if np.abs(gram - np.eye(Phi.shape[1])).max() > 1e-8:
        raise InputError("Phi columns are not orthonormal within tolerance")
    resid = Y - (Y @ Phi) @ Phi.T
    return np.einsum("ij,ij->i", resid, resid)


def trim_weights(sqnorms, alpha: float) -> np.ndarray:
    """Binary weights keeping rows strictly above the alpha quantile and
    at or below the 1-alpha quantile of the squared residual norms.

    Ties at the lower threshold drop rows (strict inequality), so tied
    data may retain fewer rows than the nominal count.
    """
    if not 0.0 < alpha < 0.5:
        raise InputError(f"alpha={alpha} outside (0, 0.5)")
    x = np.asarray(sqnorms, dtype=np.float64).ravel()
    lo = sample_quantile(x, alpha)
    hi = sample_quantile(x, 1.0 - alpha)
    return ((x > lo) & (x <= hi)).astype(np.int64)


def weighted_column_estimate(Y, w, r: int) -> np.ndarray:
    """Top-r eigenvectors of the weighted second-moment matrix.

    This is the profiled solution of the weighted least-squares problem:
    with row effects profiled out, the best orthonormal basis maximises
    trace(Phi^T M Phi) for M = sum_i w_i y_i y_i^T.
    """
    Y = as_matrix(Y, "Y")
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != Y.shape[0]:
        raise InputError("weight vector length does not match row count")
    if int((w != 0).sum()) < r:
        raise DegenerateDataError(f"only {int((w != 0).sum())} retained rows for rank {r}")
    Z = Y * w[:, None]
    M = Z.T @ Y
    M = (M + M.T) / 2.0
    vals, vecs = np.linalg.eigh(M)
    vals = vals[::-1][:r]
    vecs = np.ascontiguousarray(vecs[:, ::-1][:, :r])
    tol = Y.shape[1] * np.finfo(np.float64).eps
    if vals[-1] <= tol * max(vals[0], 0.0):
        raise DegenerateDataError(f"weighted second-moment matrix has rank below {r}")
    return fix_signs(vecs)


def robust_svd(Y, cfg: TrimConfig) -> RobustFit:
    """Full pipeline: subset search, trimming, refit, final SVD."""
    Y = as_matrix(Y, "Y")
    n, m = Y.shape
    if cfg.rank > min(n, m):
        raise InputError(f"rank {cfg.rank} exceeds min(n, m) = {min(n, m)}")
    if n <= m:
        warnings.warn(
            f"matrix has {n} rows and {m} columns; the row-sampled pipeline "
            "is designed for n > m",
            stacklevel=2,
        )
    phi_hat, chosen = _subset_search(Y, cfg)
    sq = residual_sqnorms(Y, phi_hat)
    if cfg.alpha > 0.0:
        w = trim_weights(sq, cfg.alpha)
    else:
        w = np.ones(n, dtype=np.int64)
    phi_tilde = weighted_column_estimate(Y, w, cfg.rank)
    theta_tilde = fit_all_rows(Y, phi_tilde, cfg.loss)
    approx = theta_tilde @ phi_tilde.T
    dec = numkit.svd(approx, cfg.rank)
    return RobustFit(
        Theta=dec.U * dec.singular_values,
        Phi=dec.V,
        singular_values=dec.singular_values,
        weights=w,
        residual_sqnorms=sq,
        chosen_subset=chosen,
    )


def pipeline_config_for_replicate(cfg: TrimConfig, seed: int, *path: int) -> TrimConfig:
    """Config with a derived seed so nested runs own independent streams."""
    return replace(cfg, seed=_rng.derive_seed(seed, *path))
