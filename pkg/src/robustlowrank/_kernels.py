"""Compiled kernels for per-row M-estimation.

The simulation harness runs the full fitting pipeline millions of times,
so the inner row fits are JIT-compiled.  Kernels are strict IEEE (no
fastmath) and process instances one at a time in index order, which makes
results bitwise identical regardless of batch size or outer parallelism.

The solver is the same for every rank: start from the least-squares
profile ``th = P^T y``, run a short IRLS warmup (weights psi(s)/s), then
damped Newton.  Newton steps are backtracked on the stationarity-gradient
norm (valid merit: the objective is convex and the Newton matrix is its
ridge-stabilised Hessian), with an Armijo-on-objective fallback for the
piecewise-quadratic families whose gradient can plateau across saturated
segments.  When the Hessian carries no information at all (every residual
saturated), the iteration takes an IRLS step instead: IRLS is a
majorise-minimise step for all three families, so it descends globally
and steers the iterate back into curved territory.  Convergence means the
gradient norm fell below ``1e-9 * (1 + ||y||)``; a vanishing step with a
large gradient is a stall, not convergence.

Ranks one and two (the only ranks on the simulation hot path) have fully
scalarised implementations; the array-based general version serves r >= 3.
Every fitter leaves the residuals of its final iterate in ``s``.

Loss family codes match ``loss.FAMILY_CODES``: 0 least squares, 1 Huber,
2 logistic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STEP_TOL = 1e-10
GRAD_TOL = 1e-9
MERIT_DECREASE = 1e-4
MAX_BACKTRACK = 60
CURVATURE_FLOOR = 1e-12


@njit(cache=True)
def _tanh(x):
    # exp/expm1-based tanh, accurate to ~1 ulp; the exp branch covers the
    # hot regime (|residual| well above the tuning constant) and is ~2x
    # faster than libm tanh.
    a = abs(x)
    if a >= 0.5:
        if a > 19.0:
            t = 1.0
        else:
            t = 1.0 - 2.0 / (1.0 + np.exp(2.0 * a))
    else:
        e = np.expm1(2.0 * a)
        t = e / (e + 2.0)
    return t if x >= 0.0 else -t


@njit(cache=True)
def _loss_value(fam, c, s):
    if fam == 0:
        return s * s
    elif fam == 1:
        a = abs(s)
        if a <= c:
            return 0.5 * s * s
        return c * a - 0.5 * c * c
    else:
        x = abs(s) / c
        return c * (x + np.log1p(np.exp(-2.0 * x)) - 0.6931471805599453)


@njit(cache=True)
def _psi_scalar(fam, c, v):
    if fam == 0:
        return 2.0 * v
    elif fam == 1:
        return c if v > c else (-c if v < -c else v)
    else:
        return _tanh(v / c)


@njit(cache=True)
def _weight_scalar(fam, c, v, psi):
    """IRLS weight psi(v)/v with the correct v -> 0 limit."""
    if fam == 0:
        return 2.0
    elif fam == 1:
        a = abs(v)
        return 1.0 if a <= c else c / a
    else:
        return (1.0 / c) if v == 0.0 else psi / v


@njit(cache=True)
def _d2_scalar(fam, c, v, psi):
    """L'' at v; for logistic it reuses psi = tanh(v/c)."""
    if fam == 0:
        return 2.0
    elif fam == 1:
        return 1.0 if abs(v) < c else 0.0
    else:
        return (1.0 - psi * psi) / c


@njit(cache=True)
def _d2_bound(fam, c):
    if fam == 0:
        return 2.0
    elif fam == 1:
        return 1.0
    else:
        return 1.0 / c


# ---------------------------------------------------------------------------
# rank-1 fitter
# ---------------------------------------------------------------------------


@njit(cache=True)
def _state_r1(y, P, fam, c, t0, s, psi):
    m = y.shape[0]
    g0 = 0.0
    for j in range(m):
        v = y[j] - t0 * P[j, 0]
        s[j] = v
        p = _psi_scalar(fam, c, v)
        psi[j] = p
        g0 += p * P[j, 0]
    return g0


@njit(cache=True)
def _iterate_r1(y, P, fam, c, t_start, budget, irls_iters, gtol, curve_floor, ynorm, s, psi, s2, psi2):
    m = y.shape[0]
    t0 = t_start
    g0 = _state_r1(y, P, fam, c, t0, s, psi)
    gn = abs(g0)
    iters = 0
    converged = False
    for it in range(budget):
        if gn <= gtol:
            converged = True
            break
        iters = it + 1
        use_irls = it < irls_iters
        h00 = 0.0
        if not use_irls:
            for j in range(m):
                h = _d2_scalar(fam, c, s[j], psi[j])
                if h != 0.0:
                    h00 += h * P[j, 0] * P[j, 0]
            if h00 <= curve_floor:
                use_irls = True
        if use_irls:
            a00 = 0.0
            b0 = 0.0
            for j in range(m):
                w = _weight_scalar(fam, c, s[j], psi[j])
                pw = P[j, 0] * w
                b0 += pw * y[j]
                a00 += pw * P[j, 0]
            tn = b0 / a00
            stepn = abs(tn - t0)
            t0 = tn
            g0 = _state_r1(y, P, fam, c, t0, s, psi)
            gn = abs(g0)
            if stepn <= STEP_TOL and gn > gtol and it >= irls_iters:
                break  # saturated IRLS fixpoint: genuinely stuck
        else:
            d0 = g0 / (h00 + 1e-12 + 1e-10 * h00)
            cap = 4.0 * m * (1.0 + ynorm)
            if abs(d0) > cap:
                d0 = cap if d0 > 0 else -cap
            t_ls = 1.0
            accepted = False
            tn = t0
            gn2 = gn
            if fam == 2:
                for _bt in range(MAX_BACKTRACK):
                    tn = t0 + t_ls * d0
                    g0n = _state_r1(y, P, fam, c, tn, s2, psi2)
                    gn2 = abs(g0n)
                    if gn2 * gn2 <= (1.0 - MERIT_DECREASE * t_ls) * gn * gn:
                        accepted = True
                        g0 = g0n
                        break
                    t_ls *= 0.5
            if not accepted:
                slope = g0 * d0
                f0 = 0.0
                for j in range(m):
                    f0 += _loss_value(fam, c, s[j])
                t_ls = 1.0
                for _bt in range(MAX_BACKTRACK):
                    tn = t0 + t_ls * d0
                    fv = 0.0
                    for j in range(m):
                        fv += _loss_value(fam, c, y[j] - tn * P[j, 0])
                    if fv <= f0 - MERIT_DECREASE * t_ls * slope + 1e-15 * (1.0 + abs(f0)):
                        accepted = True
                        break
                    t_ls *= 0.5
                if accepted:
                    g0 = _state_r1(y, P, fam, c, tn, s2, psi2)
                    gn2 = abs(g0)
            if not accepted:
                break  # gradient at floating-point floor
            for j in range(m):
                s[j] = s2[j]
                psi[j] = psi2[j]
            stepn = abs(tn - t0)
            t0 = tn
            gn = gn2
            if stepn <= STEP_TOL and gn > gtol:
                break
    if gn <= gtol:
        converged = True
    return t0, iters, converged, gn


@njit(cache=True)
def _fit_one_r1(y, P, fam, c, max_iter, irls_iters, s, psi, s2, psi2):
    m = y.shape[0]
    ynorm2 = 0.0
    t_init = 0.0
    for j in range(m):
        ynorm2 += y[j] * y[j]
        t_init += P[j, 0] * y[j]
    ynorm = np.sqrt(ynorm2)
    gtol = GRAD_TOL * (1.0 + ynorm)
    curve_floor = CURVATURE_FLOOR * _d2_bound(fam, c)
    t0, iters, converged, gn = _iterate_r1(
        y, P, fam, c, t_init, max_iter, irls_iters, gtol, curve_floor, ynorm, s, psi, s2, psi2
    )
    if not converged and fam != 0:
        # Fully saturated regime (objective is L1-like, curvature at the
        # floating-point floor).  The gradient is monotone nonincreasing in
        # t, so bisect it over the row-effect bound interval and polish.
        B = 2.0 * m * ynorm + 1.0
        lo = -B
        hi = B
        glo = _state_r1(y, P, fam, c, lo, s2, psi2)
        ghi = _state_r1(y, P, fam, c, hi, s2, psi2)
        if glo > 0.0 > ghi:
            for _bs in range(120):
                mid = 0.5 * (lo + hi)
                gm = _state_r1(y, P, fam, c, mid, s2, psi2)
                if gm > 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * (1.0 + abs(lo)):
                    break
            t0, extra, converged, gn = _iterate_r1(
                y, P, fam, c, 0.5 * (lo + hi), 30, 0, gtol, curve_floor, ynorm, s, psi, s2, psi2
            )
            iters += extra
        else:
            # Re-establish the fitter state contract on s.
            _state_r1(y, P, fam, c, t0, s, psi)
    bound_ok = t0 * t0 <= 4.0 * m * m * ynorm2 + 1e-9
    return t0, iters, converged, gn, bound_ok


# ---------------------------------------------------------------------------
# rank-2 fitter
# ---------------------------------------------------------------------------


@njit(cache=True)
def _state_r2(y, P, fam, c, t0, t1, s, psi):
    m = y.shape[0]
    g0 = 0.0
    g1 = 0.0
    for j in range(m):
        v = y[j] - t0 * P[j, 0] - t1 * P[j, 1]
        s[j] = v
        p = _psi_scalar(fam, c, v)
        psi[j] = p
        g0 += p * P[j, 0]
        g1 += p * P[j, 1]
    return g0, g1


@njit(cache=True)
def _iterate_r2(y, P, fam, c, t0_start, t1_start, budget, irls_iters, gtol, curve_floor, ynorm, s, psi, s2, psi2):
    m = y.shape[0]
    t0 = t0_start
    t1 = t1_start
    g0, g1 = _state_r2(y, P, fam, c, t0, t1, s, psi)
    gn = np.sqrt(g0 * g0 + g1 * g1)
    iters = 0
    converged = False
    for it in range(budget):
        if gn <= gtol:
            converged = True
            break
        iters = it + 1
        use_irls = it < irls_iters
        h00 = 0.0
        h01 = 0.0
        h11 = 0.0
        if not use_irls:
            for j in range(m):
                h = _d2_scalar(fam, c, s[j], psi[j])
                if h != 0.0:
                    p0 = P[j, 0]
                    p1 = P[j, 1]
                    h00 += h * p0 * p0
                    h01 += h * p0 * p1
                    h11 += h * p1 * p1
            if h00 + h11 <= curve_floor:
                use_irls = True
        if use_irls:
            a00 = 0.0
            a01 = 0.0
            a11 = 0.0
            b0 = 0.0
            b1 = 0.0
            for j in range(m):
                w = _weight_scalar(fam, c, s[j], psi[j])
                p0 = P[j, 0]
                p1 = P[j, 1]
                wp0 = w * p0
                wp1 = w * p1
                b0 += wp0 * y[j]
                b1 += wp1 * y[j]
                a00 += wp0 * p0
                a01 += wp0 * p1
                a11 += wp1 * p1
            det = a00 * a11 - a01 * a01
            tn0 = (b0 * a11 - a01 * b1) / det
            tn1 = (a00 * b1 - b0 * a01) / det
            dd0 = tn0 - t0
            dd1 = tn1 - t1
            stepn = np.sqrt(dd0 * dd0 + dd1 * dd1)
            t0 = tn0
            t1 = tn1
            g0, g1 = _state_r2(y, P, fam, c, t0, t1, s, psi)
            gn = np.sqrt(g0 * g0 + g1 * g1)
            if stepn <= STEP_TOL and gn > gtol and it >= irls_iters:
                break
        else:
            ridge = 1e-12 + 1e-10 * (h00 + h11)
            h00 += ridge
            h11 += ridge
            det = h00 * h11 - h01 * h01
            d0 = (g0 * h11 - h01 * g1) / det
            d1 = (h00 * g1 - g0 * h01) / det
            dn = np.sqrt(d0 * d0 + d1 * d1)
            cap = 4.0 * m * (1.0 + ynorm)
            if dn > cap:
                fac = cap / dn
                d0 *= fac
                d1 *= fac
            t_ls = 1.0
            accepted = False
            tn0 = t0
            tn1 = t1
            gn2 = gn
            if fam == 2:
                for _bt in range(MAX_BACKTRACK):
                    tn0 = t0 + t_ls * d0
                    tn1 = t1 + t_ls * d1
                    g0n, g1n = _state_r2(y, P, fam, c, tn0, tn1, s2, psi2)
                    gn2 = np.sqrt(g0n * g0n + g1n * g1n)
                    if gn2 * gn2 <= (1.0 - MERIT_DECREASE * t_ls) * gn * gn:
                        accepted = True
                        g0 = g0n
                        g1 = g1n
                        break
                    t_ls *= 0.5
            if not accepted:
                slope = g0 * d0 + g1 * d1
                f0 = 0.0
                for j in range(m):
                    f0 += _loss_value(fam, c, s[j])
                t_ls = 1.0
                for _bt in range(MAX_BACKTRACK):
                    tn0 = t0 + t_ls * d0
                    tn1 = t1 + t_ls * d1
                    fv = 0.0
                    for j in range(m):
                        fv += _loss_value(fam, c, y[j] - tn0 * P[j, 0] - tn1 * P[j, 1])
                    if fv <= f0 - MERIT_DECREASE * t_ls * slope + 1e-15 * (1.0 + abs(f0)):
                        accepted = True
                        break
                    t_ls *= 0.5
                if accepted:
                    g0, g1 = _state_r2(y, P, fam, c, tn0, tn1, s2, psi2)
                    gn2 = np.sqrt(g0 * g0 + g1 * g1)
            if not accepted:
                break
            for j in range(m):
                s[j] = s2[j]
                psi[j] = psi2[j]
            dd0 = tn0 - t0
            dd1 = tn1 - t1
            stepn = np.sqrt(dd0 * dd0 + dd1 * dd1)
            t0 = tn0
            t1 = tn1
            gn = gn2
            if stepn <= STEP_TOL and gn > gtol:
                break
    if gn <= gtol:
        converged = True
    return t0, t1, iters, converged, gn


@njit(cache=True)
def _dirderiv_r2(y, P, fam, c, t0, t1, d0, d1, alpha, s2, psi2):
    """-dF/dalpha at th + alpha*d: positive while F still decreases along d."""
    m = y.shape[0]
    acc = 0.0
    for j in range(m):
        u = d0 * P[j, 0] + d1 * P[j, 1]
        v = y[j] - (t0 + alpha * d0) * P[j, 0] - (t1 + alpha * d1) * P[j, 1]
        acc += _psi_scalar(fam, c, v) * u
    return acc


@njit(cache=True)
def _linemin_r2(y, P, fam, c, t0, t1, d0, d1, m, ynorm, s2, psi2):
    """Exact line minimisation of the convex objective along direction d.

    Bisects the monotone directional derivative; the minimiser along any
    line lies within the row-effect bound ball, so the bracket is finite.
    """
    dn = np.sqrt(d0 * d0 + d1 * d1)
    if dn == 0.0:
        return t0, t1
    d0 /= dn
    d1 /= dn
    g0 = _dirderiv_r2(y, P, fam, c, t0, t1, d0, d1, 0.0, s2, psi2)
    if g0 < 0.0:
        d0 = -d0
        d1 = -d1
        g0 = -g0
    if g0 == 0.0:
        return t0, t1
    lo = 0.0
    hi = 4.0 * m * (1.0 + ynorm) + np.sqrt(t0 * t0 + t1 * t1)
    ghi = _dirderiv_r2(y, P, fam, c, t0, t1, d0, d1, hi, s2, psi2)
    if ghi > 0.0:
        return t0 + hi * d0, t1 + hi * d1
    for _bs in range(120):
        mid = 0.5 * (lo + hi)
        gm = _dirderiv_r2(y, P, fam, c, t0, t1, d0, d1, mid, s2, psi2)
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * (1.0 + lo):
            break
    alpha = 0.5 * (lo + hi)
    return t0 + alpha * d0, t1 + alpha * d1


@njit(cache=True)
def _fit_one_r2(y, P, fam, c, max_iter, irls_iters, s, psi, s2, psi2):
    m = y.shape[0]
    ynorm2 = 0.0
    t0_init = 0.0
    t1_init = 0.0
    for j in range(m):
        ynorm2 += y[j] * y[j]
        t0_init += P[j, 0] * y[j]
        t1_init += P[j, 1] * y[j]
    ynorm = np.sqrt(ynorm2)
    gtol = GRAD_TOL * (1.0 + ynorm)
    curve_floor = CURVATURE_FLOOR * _d2_bound(fam, c)
    t0, t1, iters, converged, gn = _iterate_r2(
        y, P, fam, c, t0_init, t1_init, max_iter, irls_iters, gtol, curve_floor, ynorm, s, psi, s2, psi2
    )
    if not converged and fam != 0:
        # Fully saturated regime: the iterate sits in a nearly flat L1-type
        # valley.  Alternate exact line minimisations (bisection on the
        # monotone directional derivative) along the gradient and along the
        # active-constraint valley direction, then polish with Newton.
        for _round in range(6):
            g0, g1 = _state_r2(y, P, fam, c, t0, t1, s, psi)
            gn = np.sqrt(g0 * g0 + g1 * g1)
            if gn <= gtol:
                converged = True
                break
            t0, t1 = _linemin_r2(y, P, fam, c, t0, t1, g0, g1, m, ynorm, s2, psi2)
            # steepest-|residual| row defines the valley wall; walk along it
            _state_r2(y, P, fam, c, t0, t1, s, psi)
            jstar = 0
            smin = abs(s[0])
            for j in range(1, m):
                aj = abs(s[j])
                if aj < smin:
                    smin = aj
                    jstar = j
            v0 = -P[jstar, 1]
            v1 = P[jstar, 0]
            t0, t1 = _linemin_r2(y, P, fam, c, t0, t1, v0, v1, m, ynorm, s2, psi2)
            t0, t1, extra, converged, gn = _iterate_r2(
                y, P, fam, c, t0, t1, 15, 0, gtol, curve_floor, ynorm, s, psi, s2, psi2
            )
            iters += extra + 2
            if converged:
                break
        # Re-establish the fitter state contract on s.
        _state_r2(y, P, fam, c, t0, t1, s, psi)
    bound_ok = t0 * t0 + t1 * t1 <= 4.0 * m * m * ynorm2 + 1e-9
    return t0, t1, iters, converged, gn, bound_ok


# ---------------------------------------------------------------------------
# general-rank fitter (r >= 3)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _solve_spd(A, b, x):
    """Solve A x = b for small SPD A via Cholesky."""
    r = A.shape[0]
    L = np.empty((r, r))
    for i in range(r):
        for j in range(i + 1):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    for i in range(r):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    for i in range(r - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, r):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]


@njit(cache=True)
def _eval_state(y, P, fam, c, th, s, psi, g):
    m = y.shape[0]
    r = P.shape[1]
    for j in range(m):
        acc = y[j]
        for k in range(r):
            acc -= th[k] * P[j, k]
        s[j] = acc
        psi[j] = _psi_scalar(fam, c, acc)
    gn = 0.0
    for k in range(r):
        acc = 0.0
        for j in range(m):
            acc += psi[j] * P[j, k]
        g[k] = acc
        gn += acc * acc
    return np.sqrt(gn)


@njit(cache=True)
def _fit_one_general(y, P, fam, c, max_iter, irls_iters, th, s, psi, g, d, A, th2, s2, psi2, g2):
    m = y.shape[0]
    r = P.shape[1]
    ynorm2 = 0.0
    for j in range(m):
        ynorm2 += y[j] * y[j]
    ynorm = np.sqrt(ynorm2)
    gtol = GRAD_TOL * (1.0 + ynorm)
    curve_floor = CURVATURE_FLOOR * _d2_bound(fam, c)
    for k in range(r):
        acc = 0.0
        for j in range(m):
            acc += P[j, k] * y[j]
        th[k] = acc
    gn = _eval_state(y, P, fam, c, th, s, psi, g)
    iters = 0
    converged = False
    for it in range(max_iter):
        if gn <= gtol:
            converged = True
            break
        iters = it + 1
        use_irls = it < irls_iters
        if not use_irls:
            for k in range(r):
                for l in range(r):
                    A[k, l] = 0.0
            tr = 0.0
            for j in range(m):
                h = _d2_scalar(fam, c, s[j], psi[j])
                if h != 0.0:
                    for k in range(r):
                        ph = P[j, k] * h
                        for l in range(k, r):
                            A[k, l] += ph * P[j, l]
            for k in range(r):
                tr += A[k, k]
                for l in range(k):
                    A[k, l] = A[l, k]
            if tr <= curve_floor:
                use_irls = True
        if use_irls:
            for k in range(r):
                d[k] = 0.0
                for l in range(r):
                    A[k, l] = 0.0
            for j in range(m):
                w = _weight_scalar(fam, c, s[j], psi[j])
                for k in range(r):
                    pw = P[j, k] * w
                    d[k] += pw * y[j]
                    for l in range(k, r):
                        A[k, l] += pw * P[j, l]
            for k in range(r):
                for l in range(k):
                    A[k, l] = A[l, k]
            _solve_spd(A, d, th2)
            stepn = 0.0
            for k in range(r):
                dd = th2[k] - th[k]
                stepn += dd * dd
                th[k] = th2[k]
            stepn = np.sqrt(stepn)
            gn = _eval_state(y, P, fam, c, th, s, psi, g)
            if stepn <= STEP_TOL and gn > gtol and it >= irls_iters:
                break
        else:
            tr = 0.0
            for k in range(r):
                tr += A[k, k]
            ridge = 1e-12 + 1e-10 * tr
            for k in range(r):
                A[k, k] += ridge
            _solve_spd(A, g, d)
            dn = 0.0
            for k in range(r):
                dn += d[k] * d[k]
            dn = np.sqrt(dn)
            cap = 4.0 * m * (1.0 + ynorm)
            if dn > cap:
                fac = cap / dn
                for k in range(r):
                    d[k] *= fac
            t_ls = 1.0
            accepted = False
            gn2 = gn
            if fam == 2:
                for _bt in range(MAX_BACKTRACK):
                    for k in range(r):
                        th2[k] = th[k] + t_ls * d[k]
                    gn2 = _eval_state(y, P, fam, c, th2, s2, psi2, g2)
                    if gn2 * gn2 <= (1.0 - MERIT_DECREASE * t_ls) * gn * gn:
                        accepted = True
                        break
                    t_ls *= 0.5
            if not accepted:
                slope = 0.0
                for k in range(r):
                    slope += g[k] * d[k]
                f0 = 0.0
                for j in range(m):
                    f0 += _loss_value(fam, c, s[j])
                t_ls = 1.0
                for _bt in range(MAX_BACKTRACK):
                    for k in range(r):
                        th2[k] = th[k] + t_ls * d[k]
                    fv = 0.0
                    for j in range(m):
                        acc = y[j]
                        for k in range(r):
                            acc -= th2[k] * P[j, k]
                        fv += _loss_value(fam, c, acc)
                    if fv <= f0 - MERIT_DECREASE * t_ls * slope + 1e-15 * (1.0 + abs(f0)):
                        accepted = True
                        break
                    t_ls *= 0.5
                if accepted:
                    gn2 = _eval_state(y, P, fam, c, th2, s2, psi2, g2)
            if not accepted:
                break
            stepn = 0.0
            for k in range(r):
                dd = th2[k] - th[k]
                stepn += dd * dd
                th[k] = th2[k]
                g[k] = g2[k]
            stepn = np.sqrt(stepn)
            for j in range(m):
                s[j] = s2[j]
                psi[j] = psi2[j]
            gn = gn2
            if stepn <= STEP_TOL and gn > gtol:
                break
    if gn <= gtol:
        converged = True
    thn2 = 0.0
    for k in range(r):
        thn2 += th[k] * th[k]
    bound_ok = thn2 <= 4.0 * m * m * ynorm2 + 1e-9
    return iters, converged, gn, bound_ok


# ---------------------------------------------------------------------------
# public batch entry points
# ---------------------------------------------------------------------------


@njit(cache=True)
def fit_rows_shared(Y, P, fam, c, max_iter, irls_iters):
    """Fit every row of Y against one column basis P (m, r).

    Returns (theta, iterations, converged, gradient_norms, bound_ok).
    """
    n, m = Y.shape
    r = P.shape[1]
    theta = np.empty((n, r))
    iters = np.empty(n, np.int64)
    conv = np.empty(n, np.bool_)
    gnorm = np.empty(n)
    bound_ok = True
    s = np.empty(m)
    psi = np.empty(m)
    s2 = np.empty(m)
    psi2 = np.empty(m)
    if r == 1:
        for i in range(n):
            t0, it, cv, gn, ok = _fit_one_r1(Y[i], P, fam, c, max_iter, irls_iters, s, psi, s2, psi2)
            theta[i, 0] = t0
            iters[i] = it
            conv[i] = cv
            gnorm[i] = gn
            bound_ok = bound_ok and ok
    elif r == 2:
        for i in range(n):
            t0, t1, it, cv, gn, ok = _fit_one_r2(Y[i], P, fam, c, max_iter, irls_iters, s, psi, s2, psi2)
            theta[i, 0] = t0
            theta[i, 1] = t1
            iters[i] = it
            conv[i] = cv
            gnorm[i] = gn
            bound_ok = bound_ok and ok
    else:
        g = np.empty(r)
        d = np.empty(r)
        A = np.empty((r, r))
        th2 = np.empty(r)
        g2 = np.empty(r)
        for i in range(n):
            it, cv, gn, ok = _fit_one_general(
                Y[i], P, fam, c, max_iter, irls_iters, theta[i], s, psi, g, d, A, th2, s2, psi2, g2
            )
            iters[i] = it
            conv[i] = cv
            gnorm[i] = gn
            bound_ok = bound_ok and ok
    return theta, iters, conv, gnorm, bound_ok


@njit(cache=True)
def score_candidates(Y, Phis, skip, fam, c, max_iter, irls_iters):
    """Total robust loss over all rows of Y for each candidate basis.

    Phis has shape (G, m, r); entries of ``skip`` are excluded (loss inf).
    Returns (total_loss, all_converged, bound_ok).
    """
    G = Phis.shape[0]
    n, m = Y.shape
    r = Phis.shape[2]
    total = np.full(G, np.inf)
    all_conv = np.zeros(G, np.bool_)
    bound_ok = True
    s = np.empty(m)
    psi = np.empty(m)
    s2 = np.empty(m)
    psi2 = np.empty(m)
    th = np.empty(r)
    g = np.empty(r)
    d = np.empty(r)
    A = np.empty((r, r))
    th2 = np.empty(r)
    g2 = np.empty(r)
    for gi in range(G):
        if skip[gi]:
            continue
        P = Phis[gi]
        acc = 0.0
        okg = True
        for i in range(n):
            if r == 1:
                _t0, _it, cv, _gn, ok = _fit_one_r1(Y[i], P, fam, c, max_iter, irls_iters, s, psi, s2, psi2)
            elif r == 2:
                _t0, _t1, _it, cv, _gn, ok = _fit_one_r2(Y[i], P, fam, c, max_iter, irls_iters, s, psi, s2, psi2)
            else:
                _it, cv, _gn, ok = _fit_one_general(
                    Y[i], P, fam, c, max_iter, irls_iters, th, s, psi, g, d, A, th2, s2, psi2, g2
                )
            okg = okg and cv
            bound_ok = bound_ok and ok
            # s holds the final residuals of row i (fitter contract)
            for j in range(m):
                acc += _loss_value(fam, c, s[j])
        total[gi] = acc
        all_conv[gi] = okg
    return total, all_conv, bound_ok
