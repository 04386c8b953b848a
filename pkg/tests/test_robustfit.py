"""Tests for the subset-search / trimming / refit pipeline."""

import dataclasses
import math

import numpy as np
import pytest

from robustlowrank import _rng, loss, numkit
from robustlowrank.errors import DegenerateDataError, InputError
from robustlowrank.robustfit import (
    RobustFit,
    TrimConfig,
    residual_sqnorms,
    robust_svd,
    subset_initial,
    trim_weights,
    weighted_column_estimate,
)
from robustlowrank.simlab import SimConfig, generate_dataset

import oracles


def huber_cfg(seed=0, **kw):
    return TrimConfig(rank=2, loss=loss.huber(0.1), seed=seed, **kw)


def make_rank2(rng, n=20, m=12, noise=0.0):
    phi1 = np.ones(m) / np.sqrt(m)
    phi2 = np.tile([1.0, -1.0], m // 2) / np.sqrt(m)
    th1 = 20 + 2 * rng.standard_normal(n)
    th2 = 3 * rng.standard_normal(n)
    Y = np.outer(th1, phi1) + np.outer(th2, phi2)
    if noise:
        Y = Y + noise * rng.standard_normal((n, m))
    return Y, phi1, phi2


# ---------------------------------------------------------------------------
# TrimConfig
# ---------------------------------------------------------------------------


def test_subset_size_matches_ceiling():
    cfg = huber_cfg(alpha_star=0.3)
    assert cfg.subset_size(20) == 14


def test_trim_config_validation():
    with pytest.raises(InputError):
        TrimConfig(rank=0, loss=loss.huber(0.1))
    with pytest.raises(InputError):
        TrimConfig(rank=2, loss=loss.huber(0.1), alpha_star=0.05)
    with pytest.raises(InputError):
        TrimConfig(rank=2, loss=loss.huber(0.1), alpha=0.4, alpha_star=0.3)
    with pytest.raises(InputError):
        TrimConfig(rank=2, loss=loss.huber(0.1), n_subsets=0)
    # alpha = 0 is the documented no-trimming mode
    TrimConfig(rank=2, loss=loss.least_squares(), alpha=0.0)


# ---------------------------------------------------------------------------
# subset_initial
# ---------------------------------------------------------------------------


def test_subset_initial_noiseless_rank_one():
    rng = np.random.default_rng(0)
    m = 8
    phi = oracles.random_orthonormal(rng, m, 1)[:, 0]
    theta = 5 + rng.standard_normal(30)
    Y = np.outer(theta, phi)
    cfg = TrimConfig(rank=1, loss=loss.huber(0.1), seed=4, n_subsets=10)
    got = subset_initial(Y, cfg)[:, 0]
    assert abs(abs(got @ phi) - 1.0) < 1e-8


def test_subset_initial_beats_contaminated_subsets():
    # With planted outlier rows, the selected basis must score better than
    # any subset that contains an outlier row.
    rng = np.random.default_rng(1)
    Y, phi1, phi2 = make_rank2(rng, noise=0.3)
    Y[0] += 25 * rng.standard_normal(12)
    Y[1] += 25 * rng.standard_normal(12)
    spec = loss.huber(0.1)
    cfg = TrimConfig(rank=2, loss=spec, seed=7, n_subsets=100)
    phi_best = subset_initial(Y, cfg)

    from robustlowrank.rowfit import fit_all_rows

    def total_loss(phi):
        theta = fit_all_rows(Y, phi, spec)
        return float(np.sum(loss.loss_value(spec, Y - theta @ phi.T)))

    best = total_loss(phi_best)
    size = cfg.subset_size(20)
    for t in range(50):
        bad_rows = [0] if t % 2 == 0 else [0, 1]
        rest = rng.choice(np.arange(2, 20), size=size - len(bad_rows), replace=False)
        idx = np.sort(np.concatenate([bad_rows, rest]))
        dec = numkit.svd(Y[idx], 2)
        assert best <= total_loss(dec.V) + 1e-9


def test_subset_initial_degenerate_data():
    Y = np.zeros((10, 4))
    Y[:, 0] = 1.0
    cfg = TrimConfig(rank=2, loss=loss.least_squares(), seed=0, n_subsets=5)
    with pytest.raises(DegenerateDataError):
        subset_initial(Y, cfg)


# ---------------------------------------------------------------------------
# residual_sqnorms
# ---------------------------------------------------------------------------


def test_residual_sqnorms_in_span_is_zero():
    rng = np.random.default_rng(2)
    Phi = oracles.random_orthonormal(rng, 6, 2)
    coefs = rng.standard_normal((5, 2))
    Y = coefs @ Phi.T
    np.testing.assert_allclose(residual_sqnorms(Y, Phi), 0.0, atol=1e-18)


def test_residual_sqnorms_hand_example():
    Phi = np.array([[1.0], [0.0]])
    Y = np.array([[1.0, 2.0]])
    assert residual_sqnorms(Y, Phi)[0] == pytest.approx(4.0)


def test_residual_sqnorms_matches_projector_oracle():
    rng = np.random.default_rng(3)
    m = 9
    Phi = oracles.random_orthonormal(rng, m, 3)
    Y = rng.standard_normal((12, m))
    P = np.eye(m) - Phi @ Phi.T
    expected = np.sum((Y @ P.T) ** 2, axis=1)
    np.testing.assert_allclose(residual_sqnorms(Y, Phi), expected, atol=1e-10)


# ---------------------------------------------------------------------------
# trim_weights
# ---------------------------------------------------------------------------


def test_trim_weights_distinct_values_counts():
    rng = np.random.default_rng(4)
    x = rng.permutation(np.arange(1.0, 11.0))
    w = trim_weights(x, 0.1)
    assert w.sum() == 8
    ranks = np.argsort(np.argsort(x)) + 1
    np.testing.assert_array_equal(w == 1, (ranks >= 2) & (ranks <= 9))


def test_trim_weights_all_equal_drops_everything():
    w = trim_weights(np.full(10, 3.3), 0.2)
    assert w.sum() == 0


def test_trim_weights_count_formula():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(20) ** 2
    w = trim_weights(x, 0.1)
    assert w.sum() == math.ceil(0.9 * 20) - math.ceil(0.1 * 20)
    assert w.sum() == 16


def test_trim_weights_validates_alpha():
    with pytest.raises(InputError):
        trim_weights(np.arange(5.0), 0.0)
    with pytest.raises(InputError):
        trim_weights(np.arange(5.0), 0.5)


# ---------------------------------------------------------------------------
# weighted_column_estimate
# ---------------------------------------------------------------------------


def test_weighted_column_estimate_all_ones_matches_svd():
    rng = np.random.default_rng(6)
    Y = rng.standard_normal((15, 7))
    got = weighted_column_estimate(Y, np.ones(15), 3)
    dec = numkit.svd(Y, 3)
    np.testing.assert_allclose(np.abs(got.T @ dec.V), np.eye(3), atol=1e-8)


def test_weighted_column_estimate_zeroed_rows_match_submatrix():
    rng = np.random.default_rng(7)
    Y = rng.standard_normal((12, 6))
    w = np.ones(12)
    w[:2] = 0
    got = weighted_column_estimate(Y, w, 2)
    dec = numkit.svd(Y[2:], 2)
    np.testing.assert_allclose(np.abs(got.T @ dec.V), np.eye(2), atol=1e-8)


def test_weighted_column_estimate_maximizes_trace():
    rng = np.random.default_rng(8)
    Y = rng.standard_normal((14, 6))
    w = (rng.random(14) < 0.7).astype(float)
    M = (Y * w[:, None]).T @ Y
    got = weighted_column_estimate(Y, w, 2)
    target = np.trace(got.T @ M @ got)
    for _ in range(10_000):
        Q = oracles.random_orthonormal(rng, 6, 2)
        assert np.trace(Q.T @ M @ Q) <= target + 1e-9


def test_weighted_column_estimate_insufficient_rows():
    rng = np.random.default_rng(9)
    Y = rng.standard_normal((6, 4))
    w = np.zeros(6)
    w[0] = 1
    with pytest.raises(DegenerateDataError):
        weighted_column_estimate(Y, w, 2)


# ---------------------------------------------------------------------------
# robust_svd
# ---------------------------------------------------------------------------


def test_robust_svd_noiseless_rank_two():
    rng = np.random.default_rng(10)
    Y, _, _ = make_rank2(rng, n=24, noise=0.0)
    fit = robust_svd(Y, huber_cfg(seed=3))
    assert np.linalg.norm(Y - fit.approximant) <= 1e-6 * np.linalg.norm(Y)
    np.testing.assert_allclose(fit.Phi.T @ fit.Phi, np.eye(2), atol=1e-8)


def test_robust_svd_degenerates_to_classical_svd():
    rng = np.random.default_rng(11)
    Y = rng.standard_normal((18, 9))
    cfg = TrimConfig(rank=3, loss=loss.least_squares(), alpha=0.0, subset_all=True, seed=0)
    fit = robust_svd(Y, cfg)
    dec = numkit.svd(Y, 3)
    classical = dec.U @ np.diag(dec.singular_values) @ dec.V.T
    assert np.linalg.norm(fit.approximant - classical) <= 1e-8
    np.testing.assert_allclose(fit.singular_values, dec.singular_values, rtol=1e-10)


def test_robust_svd_deterministic():
    rng = np.random.default_rng(12)
    Y, _, _ = make_rank2(rng, noise=0.5)
    a = robust_svd(Y, huber_cfg(seed=42))
    b = robust_svd(Y, huber_cfg(seed=42))
    assert np.array_equal(a.Theta, b.Theta)
    assert np.array_equal(a.Phi, b.Phi)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.chosen_subset, b.chosen_subset)
    c = robust_svd(Y, huber_cfg(seed=43))
    assert not np.array_equal(a.chosen_subset, c.chosen_subset)


def test_robust_svd_row_permutation_equivariance():
    # With the all-rows subset the subset draw plays no role, so permuting
    # rows must permute the outputs (up to floating-point reassociation in
    # the underlying factorizations).
    rng = np.random.default_rng(13)
    Y, _, _ = make_rank2(rng, noise=0.5)
    cfg = dataclasses.replace(huber_cfg(seed=5), subset_all=True, n_subsets=1)
    base = robust_svd(Y, cfg)
    perm = rng.permutation(Y.shape[0])
    permuted = robust_svd(Y[perm], cfg)
    np.testing.assert_array_equal(permuted.weights, base.weights[perm])
    np.testing.assert_allclose(permuted.residual_sqnorms, base.residual_sqnorms[perm], rtol=1e-9)
    np.testing.assert_allclose(
        np.abs(permuted.Theta), np.abs(base.Theta[perm]), rtol=1e-7, atol=1e-9
    )


def test_robust_svd_scale_equivariance_least_squares():
    rng = np.random.default_rng(14)
    Y, _, _ = make_rank2(rng, noise=0.5)
    cfg = TrimConfig(rank=2, loss=loss.least_squares(), seed=9)
    base = robust_svd(Y, cfg)
    scaled = robust_svd(2.0 * Y, cfg)
    np.testing.assert_allclose(scaled.Theta, 2.0 * base.Theta, rtol=1e-9)
    np.testing.assert_allclose(np.abs(scaled.Phi), np.abs(base.Phi), atol=1e-9)
    np.testing.assert_allclose(scaled.singular_values, 2.0 * base.singular_values, rtol=1e-9)


def test_robust_svd_warns_for_wide_matrices():
    rng = np.random.default_rng(15)
    Y = rng.standard_normal((6, 9)) + 5
    cfg = TrimConfig(rank=1, loss=loss.least_squares(), seed=0, n_subsets=4)
    with pytest.warns(UserWarning):
        robust_svd(Y, cfg)


def test_robust_svd_beats_classical_under_gross_row_outliers():
    n, m = 20, 12
    phi1 = np.ones(m) / np.sqrt(m)
    wins = 0
    R = 200
    for i in range(R):
        g = _rng.substream(_rng.derive_seed(98, 1, i), _rng.DATASET, 0)
        th1 = 20 + 2 * g.standard_normal(n)
        Y = np.outer(th1, phi1) + g.standard_normal((n, m)) / np.sqrt(2)
        Y[:2] = 20.0 * g.standard_normal((2, m))
        fit = robust_svd(Y, huber_cfg(seed=_rng.derive_seed(98, 2, i)))
        a_rob = np.arccos(min(1.0, abs(float(fit.Phi[:, 0] @ phi1))))
        v_cls = np.linalg.svd(Y)[2][0]
        a_cls = np.arccos(min(1.0, abs(float(v_cls @ phi1))))
        wins += a_rob < a_cls
    assert wins >= 0.9 * R


def test_robust_svd_improves_second_direction_under_contamination():
    # Cell-level contamination mostly hurts the weak second direction; the
    # trimmed fit recovers it better on average than the plain SVD.
    m = 12
    phi2 = np.tile([1.0, -1.0], m // 2) / np.sqrt(m)
    rob, cls = [], []
    for i in range(250):
        sim = SimConfig(contaminated=True, hypothesis="alternative", seed=_rng.derive_seed(99, 1, i))
        Y = generate_dataset(sim, 0)
        fit = robust_svd(Y, huber_cfg(seed=_rng.derive_seed(99, 2, i)))
        rob.append(np.arccos(min(1.0, abs(float(fit.Phi[:, 1] @ phi2)))))
        cls.append(np.arccos(min(1.0, abs(float(np.linalg.svd(Y)[2][1] @ phi2)))))
    assert np.mean(rob) < np.mean(cls)


def test_weighted_second_moment_limit():
    # Monte Carlo check of the trimmed second-moment limit: with weights
    # from the fitted pipeline, n^{-1} sum w_i y_i y_i^T approaches
    # (1-2a)(mu1^2+s1^2) phi1 phi1' + (1-2a)(mu2^2+s2^2) phi2 phi2' + s2(a) I.
    n, m, alpha = 2000, 6, 0.1
    mu1, s1 = 1.5, 0.5
    mu2, s2 = 0.8, 0.3
    sd_eps = 0.3
    phi1 = np.ones(m) / np.sqrt(m)
    phi2 = np.tile([1.0, -1.0], m // 2) / np.sqrt(m)
    gen = _rng.substream(321, _rng.DATASET, 0)
    alt = np.tile([1.0, -1.0], n // 2)
    th1 = mu1 + s1 * gen.standard_normal(n)
    th2 = mu2 * alt + s2 * gen.standard_normal(n)
    Y = np.outer(th1, phi1) + np.outer(th2, phi2) + sd_eps * gen.standard_normal((n, m))

    cfg = TrimConfig(rank=2, loss=loss.least_squares(), alpha=alpha, seed=11)
    phi_hat = subset_initial(Y, cfg)
    w = trim_weights(residual_sqnorms(Y, phi_hat), alpha)
    lhs = (Y * w[:, None]).T @ Y / n

    # independent oracle for the trimmed error second moment
    gen2 = _rng.substream(322, _rng.DATASET, 0)
    eps = sd_eps * gen2.standard_normal((400_000, m))
    P = np.eye(m) - np.outer(phi1, phi1) - np.outer(phi2, phi2)
    e = eps @ P.T
    q = np.einsum("ij,ij->i", e, e)
    lo, hi = np.quantile(q, [alpha, 1 - alpha])
    keep = (q >= lo) & (q <= hi)
    sigma2_alpha = float(np.mean(eps[keep] ** 2))

    rhs = (
        (1 - 2 * alpha) * (mu1**2 + s1**2) * np.outer(phi1, phi1)
        + (1 - 2 * alpha) * (mu2**2 + s2**2) * np.outer(phi2, phi2)
        + sigma2_alpha * np.eye(m)
    )
    assert np.linalg.norm(lhs - rhs) <= 0.1


def test_initial_estimate_consistency_in_n():
    # The subset-search estimate tightens as n grows (root-n consistency
    # checked loosely through a factor-4 sample-size jump).
    m = 8
    phi1 = np.ones(m) / np.sqrt(m)
    errs = {}
    for n in (50, 200):
        devs = []
        for i in range(40):
            g = _rng.substream(_rng.derive_seed(55, n, i), _rng.DATASET, 0)
            th1 = 5 + g.standard_normal(n)
            Y = np.outer(th1, phi1) + 0.5 * g.standard_normal((n, m))
            cfg = TrimConfig(rank=1, loss=loss.huber(0.5), seed=i, n_subsets=30)
            phi = subset_initial(Y, cfg)[:, 0]
            devs.append(np.arccos(min(1.0, abs(float(phi @ phi1)))))
        errs[n] = np.median(devs)
    assert errs[200] < errs[50]


def test_row_effect_distribution_tracks_truth():
    # Empirical check of the fitted-row convergence: the rank-one robust
    # approximant's rows concentrate around the true mean rows as n grows.
    m = 8
    phi1 = np.ones(m) / np.sqrt(m)
    n = 400
    g = _rng.substream(777, _rng.DATASET, 0)
    th1 = 10 + 2 * g.standard_normal(n)
    Y = np.outer(th1, phi1) + 0.4 * g.standard_normal((n, m))
    fit = robust_svd(Y, TrimConfig(rank=1, loss=loss.huber(0.5), seed=0))
    row_err = np.linalg.norm(fit.approximant - np.outer(th1, phi1), axis=1)
    assert np.median(row_err) < 3 * 0.4  # residual-scale concentration
