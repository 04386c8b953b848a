"""Score tests for unidimensionality of the mean structure.

The null hypothesis is that the mean matrix has rank one.  Each row
contributes a score: the derivative of the loss at the rank-1 robust fit
residuals, projected on the second column direction.  A target direction
``a`` over rows (orthogonal to the first mean direction, ``||a||^2 = n``)
turns the scores into an asymptotically standard normal statistic; K
mutually orthogonal directions give a chi-square statistic.  Calibration
is asymptotic or by a row-sign wild bootstrap under the rank-1 null fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import _kernels, _rng
from .errors import ConvergenceError, DegenerateDataError, DegenerateScaleError, InputError, NumericError
from .loss import LossSpec, loss_deriv
from .numkit import as_matrix
from .robustfit import RobustFit, TrimConfig, robust_svd
from .rowfit import IRLS_PHASE, MAX_ITER

__all__ = [
    "DirectionSet",
    "TestResult",
    "score_vector",
    "sigma_hat",
    "direction_test",
    "multi_direction_test",
    "orthogonalize_direction",
    "group_contrast",
    "group_mean_direction",
    "bootstrap_pvalue",
    "test_unidimensionality",
]

DEFAULT_BOOTSTRAP = 199
MAX_REPLICATE_RETRIES = 3


def _check_direction(a: np.ndarray, n: int, tol: float = 1e-6) -> None:
    nrm2 = float(a @ a)
    if abs(nrm2 - n) > tol * max(1.0, n):
        raise InputError(f"direction has squared norm {nrm2:.6g}, expected {n}")


@dataclass
class DirectionSet:
    """K mutually orthogonal target directions over rows (one per row of A)."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim == 1:
            A = A[None, :]
        if A.ndim != 2:
            raise InputError("A must be a K x n matrix")
        K, n = A.shape
        for l in range(K):
            _check_direction(A[l], n, tol=1e-8)
        gram = A @ A.T
        off = np.abs(gram - np.diag(np.diag(gram))).max() if K > 1 else 0.0
        if off > 1e-8 * n:
            raise InputError(f"direction rows are not mutually orthogonal (max dot {off:.3e})")
        mags = np.abs(A)
        if mags.max() > 10.0 * mags.mean():
            warnings.warn(
                "direction entries are strongly concentrated (sup-norm above "
                "10x the mean magnitude); the normal approximation may be poor",
                stacklevel=2,
            )
        self.A = A

    @property
    def k(self) -> int:
        return self.A.shape[0]


@dataclass
class TestResult:
    """Outcome of a unidimensionality score test."""

    gamma: np.ndarray
    statistic: float
    sigma_n: float
    p_asymptotic: float
    kind: str
    df: int = 1
    p_bootstrap: float | None = None
    direction: np.ndarray | None = None


def score_vector(Y, phi1, phi2, loss: LossSpec) -> np.ndarray:
    """Per-row scores gamma_i = sum_j L'(y_ij - f(y_i, phi1) phi1_j) phi2_j.

    ``f`` is the rank-1 robust row fit against phi1 alone.
    """
    Y = as_matrix(Y, "Y")
    phi1 = np.asarray(phi1, dtype=np.float64).ravel()
    phi2 = np.asarray(phi2, dtype=np.float64).ravel()
    m = Y.shape[1]
    if phi1.shape[0] != m or phi2.shape[0] != m:
        raise InputError("phi1/phi2 length does not match column count")
    for name, v in (("phi1", phi1), ("phi2", phi2)):
        if abs(float(v @ v) - 1.0) > 1e-8:
            raise InputError(f"{name} is not unit-norm")
    if abs(float(phi1 @ phi2)) > 1e-8:
        raise InputError("phi1 and phi2 are not orthogonal")
    theta, _iters, conv, _gn, _ok = _kernels.fit_rows_shared(
        np.ascontiguousarray(Y), np.ascontiguousarray(phi1[:, None]), loss.code, loss.c, MAX_ITER, IRLS_PHASE
    )
    if not conv.all():
        bad = int(np.flatnonzero(~conv)[0])
        raise ConvergenceError(f"row {bad}: rank-1 fit did not converge")
    resid = Y - theta[:, 0][:, None] * phi1[None, :]
    return loss_deriv(loss, resid) @ phi2


def sigma_hat(gamma) -> float:
    """Square root of the scores' variance n^{-1} sum g^2 - (n^{-1} sum g)^2."""
    g = np.asarray(gamma, dtype=np.float64).ravel()
    if g.size < 2:
        raise InputError("need at least two scores")
    var = float(np.var(g))
    if var <= 0.0:
        raise DegenerateScaleError("scores are constant; test statistic undefined")
    return math.sqrt(var)


def direction_test(gamma, a, sigma: float) -> TestResult:
    """z test: statistic n^{-1/2} a . gamma / sigma, two-sided normal p."""
    g = np.asarray(gamma, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.shape != g.shape:
        raise InputError("direction and score lengths differ")
    n = g.size
    _check_direction(a, n)
    num = float(a @ g)
    if num == 0.0:
        return TestResult(gamma=g, statistic=0.0, sigma_n=float(sigma), p_asymptotic=1.0, kind="z", direction=a)
    if not sigma > 0.0:
        raise DegenerateScaleError("sigma must be positive for a nonzero score contrast")
    T = num / (math.sqrt(n) * sigma)
    p = 2.0 * float(stats.norm.sf(abs(T)))
    return TestResult(gamma=g, statistic=T, sigma_n=float(sigma), p_asymptotic=p, kind="z", direction=a)


def multi_direction_test(gamma, directions: DirectionSet, sigma: float) -> TestResult:
    """Chi-square test over K orthogonal directions: n^{-1}||A gamma||^2 / sigma^2."""
    g = np.asarray(gamma, dtype=np.float64).ravel()
    A = directions.A
    if A.shape[1] != g.size:
        raise InputError("direction and score lengths differ")
    n = g.size
    proj = A @ g
    num = float(proj @ proj)
    if num == 0.0:
        return TestResult(
            gamma=g, statistic=0.0, sigma_n=float(sigma), p_asymptotic=1.0,
            kind="chi_square", df=directions.k, direction=A,
        )
    if not sigma > 0.0:
        raise DegenerateScaleError("sigma must be positive for a nonzero score contrast")
    T = num / (n * sigma * sigma)
    p = float(stats.chi2.sf(T, directions.k))
    return TestResult(
        gamma=g, statistic=T, sigma_n=float(sigma), p_asymptotic=p,
        kind="chi_square", df=directions.k, direction=A,
    )


def orthogonalize_direction(a_raw, mu1) -> np.ndarray:
    """Remove the component of ``a_raw`` along ``mu1``, rescale to ||a||^2 = n.

    ``mu1`` is the estimated first mean direction over rows (typically the
    group-wise means of the fitted leading row effects, expanded to a full
    vector; see :func:`group_mean_direction`).
    """
    a = np.asarray(a_raw, dtype=np.float64).ravel()
    mu = np.asarray(mu1, dtype=np.float64).ravel()
    if a.shape != mu.shape:
        raise InputError("direction and mean-direction lengths differ")
    n = a.size
    mu_nrm2 = float(mu @ mu)
    if mu_nrm2 <= 0.0:
        raise InputError("mean direction is zero; nothing to orthogonalize against")
    resid = a - (float(a @ mu) / mu_nrm2) * mu
    nrm2 = float(resid @ resid)
    if nrm2 <= 1e-16 * max(1.0, float(a @ a)):
        raise DegenerateDataError("direction is parallel to the estimated mean direction")
    return resid * math.sqrt(n / nrm2)


def group_contrast(labels) -> np.ndarray:
    """+1/-1 contrast between exactly two groups, in first-seen label order."""
    labels = list(labels)
    seen: list = []
    for lab in labels:
        if lab not in seen:
            seen.append(lab)
    if len(seen) != 2:
        raise InputError(f"need exactly two groups, got {len(seen)}")
    return np.where(np.asarray(labels, dtype=object) == seen[0], 1.0, -1.0).astype(np.float64)


def group_mean_direction(values, labels=None) -> np.ndarray:
    """Group-wise means of ``values`` expanded back to a full n-vector.

    Without labels all rows form one group, so the result is the constant
    grand-mean vector.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if labels is None:
        return np.full(v.shape, v.mean())
    labels = list(labels)
    if len(labels) != v.size:
        raise InputError("labels length does not match value count")
    out = np.empty_like(v)
    arr = np.asarray(labels, dtype=object)
    for lab in dict.fromkeys(labels):
        mask = arr == lab
        out[mask] = v[mask].mean()
    return out


def _exact_rank_one_fit(Y: np.ndarray, cfg: TrimConfig) -> RobustFit | None:
    """The rank-1 fit when it reproduces Y to machine precision, else None.

    A rank-2 pipeline necessarily fails on exactly unidimensional data (the
    second direction is numerically meaningless).  In that case the data
    itself settles the test: a perfect rank-1 fit means zero scores and no
    evidence whatsoever against unidimensionality.
    """
    try:
        fit1 = robust_svd(Y, replace(cfg, rank=1))
    except NumericError:
        return None
    if np.linalg.norm(Y - fit1.approximant) <= 1e-12 * max(1.0, np.linalg.norm(Y)):
        return fit1
    return None


def _observed_statistic(Y: np.ndarray, a: np.ndarray, cfg: TrimConfig) -> tuple[float, np.ndarray, float, RobustFit]:
    """Full-pipeline z statistic: rank-2 robust fit, scores, normalisation."""
    if cfg.rank != 2:
        raise InputError("the unidimensionality test requires a rank-2 fit config")
    try:
        fit = robust_svd(Y, cfg)
    except DegenerateDataError:
        fit1 = _exact_rank_one_fit(Y, cfg)
        if fit1 is None:
            raise
        return 0.0, np.zeros(Y.shape[0]), 0.0, fit1
    gamma = score_vector(Y, fit.Phi[:, 0], fit.Phi[:, 1], cfg.loss)
    num = float(a @ gamma)
    var = float(np.var(gamma))
    if var <= 0.0:
        if num == 0.0:
            return 0.0, gamma, 0.0, fit
        raise DegenerateScaleError("scores are constant; test statistic undefined")
    sigma = math.sqrt(var)
    return num / (math.sqrt(gamma.size) * sigma), gamma, sigma, fit


def _bootstrap_statistics(Y, a, cfg: TrimConfig, B: int, seed: int):
    """Yield wild-bootstrap replicate statistics |T*_b| in replicate order.

    Null model: rank-1 robust fit; replicates flip whole residual rows by
    independent signs and re-run the complete pipeline with a
    replicate-indexed seed.  A failed replicate (degenerate resample) is
    redrawn up to MAX_REPLICATE_RETRIES times.
    """
    n = Y.shape[0]
    null_fit = robust_svd(Y, replace(cfg, rank=1))
    M1 = null_fit.approximant
    E = Y - M1
    for b in range(B):
        last_err: Exception | None = None
        for attempt in range(MAX_REPLICATE_RETRIES + 1):
            gen = _rng.substream(seed, _rng.BOOT_SIGNS, b, attempt)
            signs = gen.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
            Yb = M1 + signs[:, None] * E
            cfg_b = replace(cfg, seed=_rng.derive_seed(seed, _rng.BOOT_PIPELINE, b, attempt))
            try:
                Tb, _g, _s, _f = _observed_statistic(Yb, a, cfg_b)
            except NumericError as err:
                last_err = err
                continue
            yield abs(Tb)
            break
        else:
            raise NumericError(
                f"bootstrap replicate {b} failed {MAX_REPLICATE_RETRIES + 1} times: {last_err}"
            )


def bootstrap_pvalue(Y, a, cfg: TrimConfig, B: int = DEFAULT_BOOTSTRAP, seed: int | None = None) -> float:
    """Wild-bootstrap p-value (1 + #{|T*| >= |T|}) / (B + 1)."""
    if B < 19:
        raise InputError(f"B={B} too small; need at least 19 replicates")
    Y = as_matrix(Y, "Y")
    a = np.asarray(a, dtype=np.float64).ravel()
    _check_direction(a, Y.shape[0])
    if seed is None:
        seed = cfg.seed
    T_obs, _gamma, _sigma, _fit = _observed_statistic(Y, a, cfg)
    count = 0
    for t_abs in _bootstrap_statistics(Y, a, cfg, B, seed):
        if t_abs >= abs(T_obs):
            count += 1
    return (1 + count) / (B + 1)


def bootstrap_rejects(Y, a, cfg: TrimConfig, B: int, seed: int, level: float = 0.05) -> bool:
    """Level-``level`` rejection decision of the bootstrap-calibrated test.

    Identical to ``bootstrap_pvalue(...) <= level`` but stops as soon as
    enough exceedances accumulate to make rejection impossible, which is
    what a Monte Carlo rejection-rate study needs.
    """
    Y = as_matrix(Y, "Y")
    a = np.asarray(a, dtype=np.float64).ravel()
    max_exceed = int(math.floor(level * (B + 1) - 1 + 1e-9))
    if max_exceed < 0:
        return False
    T_obs, _gamma, _sigma, _fit = _observed_statistic(Y, a, cfg)
    count = 0
    done = 0
    for t_abs in _bootstrap_statistics(Y, a, cfg, B, seed):
        done += 1
        if t_abs >= abs(T_obs):
            count += 1
            if count > max_exceed:
                return False
        elif count + (B - done) <= max_exceed:
            return True
    return True


def test_unidimensionality(
    Y,
    a,
    cfg: TrimConfig,
    calibration: str = "asymptotic",
    B: int = DEFAULT_BOOTSTRAP,
    seed: int | None = None,
) -> tuple[TestResult, RobustFit]:
    """End-to-end single-direction test; returns the result and the fit."""
    Y = as_matrix(Y, "Y")
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size != Y.shape[0]:
        raise InputError("direction length does not match row count")
    _check_direction(a, Y.shape[0])
    if calibration not in ("asymptotic", "bootstrap"):
        raise InputError(f"unknown calibration {calibration!r}")
    T, gamma, sigma, fit = _observed_statistic(Y, a, cfg)
    p_asym = 1.0 if T == 0.0 else 2.0 * float(stats.norm.sf(abs(T)))
    result = TestResult(
        gamma=gamma, statistic=T, sigma_n=sigma, p_asymptotic=p_asym, kind="z", direction=a
    )
    if calibration == "bootstrap":
        result.p_bootstrap = bootstrap_pvalue(Y, a, cfg, B=B, seed=cfg.seed if seed is None else seed)
    return result, fit
