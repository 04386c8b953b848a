"""Independent reference implementations used to check the library.

These deliberately avoid the code paths they verify: the eigensolver is
a plain cyclic Jacobi iteration (no LAPACK), the 1-D minimiser is golden
section, and the quantile is direct order-statistic indexing.
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_eigh(S: np.ndarray, sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Returns (values, vectors) sorted descending.
    """
    A = np.array(S, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += A[p, q] ** 2
        if off <= 1e-30 * max(1.0, np.trace(A @ A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                V = V @ rot
    vals = np.diag(A).copy()
    order = np.argsort(vals)[::-1]
    return vals[order], V[:, order]


def svd_via_gram(M: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-k singular triplets built from the Jacobi eigendecomposition of
    the Gram matrix plus explicit Gram-Schmidt for the left vectors."""
    vals, vecs = jacobi_eigh(M.T @ M)
    s = np.sqrt(np.clip(vals[:k], 0.0, None))
    V = vecs[:, :k]
    U = np.zeros((M.shape[0], k))
    for j in range(k):
        u = M @ V[:, j]
        for i in range(j):
            u -= (u @ U[:, i]) * U[:, i]
        nrm = np.linalg.norm(u)
        if nrm > 0:
            U[:, j] = u / nrm
    return U, s, V


def golden_section(f, lo: float, hi: float, iters: int = 300) -> float:
    """Golden-section minimiser of a unimodal function on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
        if b - a < 1e-13 * (1.0 + abs(a) + abs(b)):
            break
    return (a + b) / 2.0


def order_statistic(x, k: int) -> float:
    """k-th smallest value (1-based)."""
    return float(np.sort(np.asarray(x, dtype=np.float64))[k - 1])


def two_pass_variance(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    return float(((x - mu) ** 2).mean())


def central_difference(f, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def random_orthonormal(rng: np.random.Generator, m: int, r: int) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((m, r)))
    return Q[:, :r]
