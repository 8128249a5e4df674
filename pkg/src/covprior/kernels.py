"""Compiled forward-mode kernels for the four log posteriors.

Each kernel returns ``(log posterior, gradient)`` in the unconstrained
parameterization used by :func:`covprior.priors.chol_and_logprior`. The
arithmetic follows the generic dual kernel step for step: every intermediate
carries its value together with a leading axis of partial derivatives, one
per parameter, and the same tangent rules are applied. The generic version
stays the reference; the test suite checks the two agree.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG2 = float(np.log(2.0))


@njit(cache=True)
def _spd_block(x, off, d, k):
    """Lower factor with exponentiated diagonal filled row-wise from ``x[off:]``.

    Returns ``(L, dL, logjac, dlogjac, half_logdet, dhalf_logdet)``.
    """
    L = np.zeros((d, d))
    dL = np.zeros((k, d, d))
    logjac = d * LOG2
    dlogjac = np.zeros(k)
    hld = 0.0
    dhld = np.zeros(k)
    p = off
    for i in range(d):
        for j in range(i + 1):
            if i == j:
                e = np.exp(x[p])
                L[i, i] = e
                dL[p, i, i] = e
                w = d + 1.0 - i
                logjac += w * x[p]
                dlogjac[p] += w
                hld += x[p]
                dhld[p] += 1.0
            else:
                L[i, j] = x[p]
                dL[p, i, j] = 1.0
            p += 1
    return L, dL, logjac, dlogjac, hld, dhld


@njit(cache=True)
def _corr_block(x, off, d, k):
    """Correlation factor from canonical partial correlations ``tanh(x[off:])``.

    Returns ``(L, dL, logjac, dlogjac, half_logdet, dhalf_logdet)``.
    """
    Z = np.zeros((d, d))
    dZ = np.zeros((k, d, d))
    W = np.zeros((d, d))
    dW = np.zeros((k, d, d))
    p = off
    for i in range(1, d):
        for j in range(i):
            v = x[p]
            z = np.tanh(v)
            a = abs(v)
            Z[i, j] = z
            dZ[p, i, j] = 1.0 - z * z
            # log(1 - z^2) = -2 log cosh v
            W[i, j] = -2.0 * (a + np.log1p(np.exp(-2.0 * a)) - LOG2)
            dW[p, i, j] = -2.0 * z
            p += 1
    L = np.zeros((d, d))
    dL = np.zeros((k, d, d))
    logjac = 0.0
    dlogjac = np.zeros(k)
    hld = 0.0
    dhld = np.zeros(k)
    for i in range(d):
        c = 0.0
        dc = np.zeros(k)
        for j in range(i + 1):
            # c = sum_{m<j} W[i, m]
            e = np.exp(0.5 * c)
            zi = Z[i, j] + (1.0 if i == j else 0.0)
            L[i, j] = zi * e
            for a in range(k):
                dL[a, i, j] = dZ[a, i, j] * e + zi * e * 0.5 * dc[a]
            if i == j:
                hld += 0.5 * c
                for a in range(k):
                    dhld[a] += 0.5 * dc[a]
            else:
                w = (d - j) / 2.0
                logjac += w * W[i, j]
                for a in range(k):
                    dlogjac[a] += w * dW[a, i, j]
            c += W[i, j]
            for a in range(k):
                dc[a] += dW[a, i, j]
    return L, dL, logjac, dlogjac, hld, dhld


@njit(cache=True)
def _lower_inv(L):
    d = L.shape[0]
    X = np.zeros((d, d))
    for j in range(d):
        X[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, d):
            s = 0.0
            for m in range(j, i):
                s += L[i, m] * X[m, j]
            X[i, j] = -s / L[i, i]
    return X


@njit(cache=True)
def _tri_inv(L, dL):
    X = _lower_inv(L)
    k = dL.shape[0]
    dX = np.empty_like(dL)
    for a in range(k):
        dX[a] = -(X @ dL[a] @ X)
    return X, dX


@njit(cache=True)
def _sq_norm_matmul(X, dX, B):
    """``||X B||_F^2`` and its partials."""
    k = dX.shape[0]
    if B.shape[1] == 0:
        return 0.0, np.zeros(k)
    M = X @ B
    val = np.sum(M * M)
    g = np.empty(k)
    for a in range(k):
        g[a] = 2.0 * np.sum(M * (dX[a] @ B))
    return val, g


@njit(cache=True)
def _scale_cols(X, dX, logs, off):
    """``X * exp(-logs)[None, :]`` where ``logs = x[off:off + d]``."""
    d = X.shape[0]
    k = dX.shape[0]
    e = np.exp(-logs)
    Y = X * e.reshape(1, d)
    dY = dX * e.reshape(1, 1, d)
    for j in range(d):
        for i in range(d):
            dY[off + j, i, j] -= Y[i, j]
    return Y, dY


@njit(cache=True)
def _col_sq_sums(X, dX):
    d = X.shape[0]
    k = dX.shape[0]
    c = np.zeros(d)
    dc = np.zeros((k, d))
    for j in range(d):
        for i in range(d):
            c[j] += X[i, j] * X[i, j]
            for a in range(k):
                dc[a, j] += 2.0 * X[i, j] * dX[a, i, j]
    return c, dc


@njit(cache=True)
def _normal_block(x, off, b, xi):
    """Sum of normal log densities of ``x[off:off + d]`` (without constants) and its partials."""
    d = b.shape[0]
    k = x.shape[0]
    val = 0.0
    g = np.zeros(k)
    for i in range(d):
        z = (x[off + i] - b[i]) / xi[i]
        val -= 0.5 * z * z
        g[off + i] = -z / xi[i]
    return val, g


@njit(cache=True)
def _loglik(Linv, dLinv, hld, dhld, F, n, const):
    tr, dtr = _sq_norm_matmul(Linv, dLinv, F)
    return const - n * hld - 0.5 * tr, -n * dhld - 0.5 * dtr


@njit(cache=True)
def iw_kernel(x, d, nu, lam_chol, const, F, n, lik_const):
    """IW prior; ``const`` holds every term free of ``x``."""
    k = x.shape[0]
    L, dL, lj, dlj, hld, dhld = _spd_block(x, 0, d, k)
    X, dX = _tri_inv(L, dL)
    tr, dtr = _sq_norm_matmul(X, dX, lam_chol)
    lp = -(nu + d + 1) * hld - 0.5 * tr + lj + const
    g = -(nu + d + 1) * dhld - 0.5 * dtr + dlj
    ll, dll = _loglik(X, dX, hld, dhld, F, n, lik_const)
    return lp + ll, g + dll


@njit(cache=True)
def siw_kernel(x, d, nu, lam_chol, b, xi, const, F, n, lik_const):
    k = x.shape[0]
    m = d * (d + 1) // 2
    Lq, dLq, lj, dlj, hld, dhld = _spd_block(x, 0, d, k)
    X, dX = _tri_inv(Lq, dLq)
    tr, dtr = _sq_norm_matmul(X, dX, lam_chol)
    nl, dnl = _normal_block(x, m, b, xi)
    lp = -(nu + d + 1) * hld - 0.5 * tr + lj + nl + const
    g = -(nu + d + 1) * dhld - 0.5 * dtr + dlj + dnl
    Y, dY = _scale_cols(X, dX, x[m:], m)
    hs = hld
    dhs = dhld.copy()
    for i in range(d):
        hs += x[m + i]
        dhs[m + i] += 1.0
    ll, dll = _loglik(Y, dY, hs, dhs, F, n, lik_const)
    return lp + ll, g + dll


@njit(cache=True)
def hiwht_kernel(x, d, nu, rate, const, F, n, lik_const):
    k = x.shape[0]
    m = d * (d + 1) // 2
    L, dL, lj, dlj, hld, dhld = _spd_block(x, 0, d, k)
    X, dX = _tri_inv(L, dL)
    col, dcol = _col_sq_sums(X, dX)
    nu_iw = nu + d - 1
    tr = 0.0
    dtr = np.zeros(k)
    lam_term = 0.0
    dlam_term = np.zeros(k)
    sum_loglam = 0.0
    dsum = np.zeros(k)
    for j in range(d):
        lam = np.exp(x[m + j])
        tr += 2.0 * nu * col[j] * lam
        dtr += 2.0 * nu * lam * dcol[:, j]
        dtr[m + j] += 2.0 * nu * col[j] * lam
        lam_term += rate[j] * lam
        dlam_term[m + j] += rate[j] * lam
        sum_loglam += x[m + j]
        dsum[m + j] += 1.0
    # IW(nu + d - 1, 2 nu diag(lambda)); log|scale|/2 contributes nu_iw/2 * sum log lambda
    lp = -(nu_iw + d + 1) * hld - 0.5 * tr + 0.5 * nu_iw * sum_loglam + lj
    g = -(nu_iw + d + 1) * dhld - 0.5 * dtr + 0.5 * nu_iw * dsum + dlj
    lp += 0.5 * sum_loglam - lam_term + const
    g += 0.5 * dsum - dlam_term
    ll, dll = _loglik(X, dX, hld, dhld, F, n, lik_const)
    return lp + ll, g + dll


@njit(cache=True)
def bmmmu_kernel(x, d, nu, b, xi, const, F, n, lik_const):
    k = x.shape[0]
    Lr, dLr, lj, dlj, hld, dhld = _corr_block(x, d, d, k)
    X, dX = _tri_inv(Lr, dLr)
    rd, drd = _col_sq_sums(X, dX)
    slog = 0.0
    dslog = np.zeros(k)
    for j in range(d):
        slog += np.log(rd[j])
        dslog += drd[:, j] / rd[j]
    nl, dnl = _normal_block(x, 0, b, xi)
    lp = -(nu + d + 1) * hld - 0.5 * nu * slog + lj + nl + const
    g = -(nu + d + 1) * dhld - 0.5 * nu * dslog + dlj + dnl
    Y, dY = _scale_cols(X, dX, x[:d], 0)
    hs = hld
    dhs = dhld.copy()
    for i in range(d):
        hs += x[i]
        dhs[i] += 1.0
    ll, dll = _loglik(Y, dY, hs, dhs, F, n, lik_const)
    return lp + ll, g + dll
