"""numba versions of the hot kernels (see ``_kernels_numpy`` for docs)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def double_well_grid(x, z):
    n = z.shape[0]
    m = x.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            xj = x[j]
            if xj == 0.0:
                out[i, j] = 0.0
                continue
            out[i, j] = _dw_point(xj, z[i])
    return out


@njit(cache=True)
def _dw_point(xj, zi):
    q = (1.0 - xj) * (1.0 + xj)
    if q == 0.0:
        return math.copysign(1.0, xj)
    lr = math.log(q) - 2.0 * zi - 2.0 * math.log(abs(xj))
    r = math.exp(lr) if lr < 709.0 else math.inf
    return math.copysign(1.0 / math.sqrt(1.0 + r), xj)


@njit(cache=True)
def _poly_point(x, coef, powers, out):
    d = coef.shape[0]
    K = coef.shape[1]
    for i in range(d):
        s = 0.0
        for k in range(K):
            c = coef[i, k]
            if c == 0.0:
                continue
            mono = 1.0
            for j in range(d):
                p = powers[i, k, j]
                for _ in range(p):
                    mono *= x[j]
            s += c * mono
        out[i] = s


@njit(cache=True)
def _heun_increment_point(x, h, dw, drift_c, drift_p, diff_c, diff_p, f0, g0, xp, f1, g1, inc):
    d = x.shape[0]
    _poly_point(x, drift_c, drift_p, f0)
    _poly_point(x, diff_c, diff_p, g0)
    for i in range(d):
        xp[i] = x[i] + f0[i] * h + g0[i] * dw
    _poly_point(xp, drift_c, drift_p, f1)
    _poly_point(xp, diff_c, diff_p, g1)
    for i in range(d):
        inc[i] = 0.5 * (f0[i] + f1[i]) * h + 0.5 * (g0[i] + g1[i]) * dw


@njit(cache=True)
def heun_forward(X, W, h, drift_c, drift_p, diff_c, diff_p):
    m, d = X.shape
    out = X.copy()
    f0 = np.empty(d)
    g0 = np.empty(d)
    xp = np.empty(d)
    f1 = np.empty(d)
    g1 = np.empty(d)
    inc = np.empty(d)
    x = np.empty(d)
    nsteps = W.shape[0] - 1
    for p in range(m):
        for i in range(d):
            x[i] = out[p, i]
        for k in range(nsteps):
            dw = W[k + 1] - W[k]
            _heun_increment_point(x, h, dw, drift_c, drift_p, diff_c, diff_p, f0, g0, xp, f1, g1, inc)
            for i in range(d):
                x[i] += inc[i]
        for i in range(d):
            out[p, i] = x[i]
    return out


@njit(cache=True)
def heun_inverse(Y, W, h, drift_c, drift_p, diff_c, diff_p, max_iter=60, tol=1e-15):
    m, d = Y.shape
    out = Y.copy()
    f0 = np.empty(d)
    g0 = np.empty(d)
    xp = np.empty(d)
    f1 = np.empty(d)
    g1 = np.empty(d)
    inc = np.empty(d)
    y = np.empty(d)
    z = np.empty(d)
    nsteps = W.shape[0] - 1
    for p in range(m):
        for i in range(d):
            y[i] = out[p, i]
        for k in range(nsteps - 1, -1, -1):
            dw = W[k + 1] - W[k]
            _heun_increment_point(y, h, dw, drift_c, drift_p, diff_c, diff_p, f0, g0, xp, f1, g1, inc)
            for i in range(d):
                z[i] = y[i] - inc[i]
            for _ in range(max_iter):
                _heun_increment_point(z, h, dw, drift_c, drift_p, diff_c, diff_p, f0, g0, xp, f1, g1, inc)
                delta = 0.0
                for i in range(d):
                    zn = y[i] - inc[i]
                    delta = max(delta, abs(zn - z[i]))
                    z[i] = zn
                if delta <= tol:
                    break
            for i in range(d):
                y[i] = z[i]
        for i in range(d):
            out[p, i] = y[i]
    return out


@njit(cache=True)
def double_well_pairs(x, z):
    m = x.shape[0]
    out = np.empty(m)
    for j in range(m):
        xj = x[j]
        if xj == 0.0:
            out[j] = 0.0
            continue
        out[j] = _dw_point(xj, z[j])
    return out
