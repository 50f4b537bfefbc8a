"""Pure-numpy reference kernels.

Every function here has a twin with the same signature in
``_kernels_numba``. Results agree to rounding.
"""

import numpy as np


def double_well_grid(x, z):
    """Closed-form double-well map ``x -> x e^z / sqrt(1 - x^2 + x^2 e^{2z})``.

    Evaluated as ``sign(x) / sqrt(1 + r)`` with
    ``r = exp(log((1-x)(1+x)) - 2z - 2 log|x|)``, so neither large ``|z|``
    nor tiny ``|x|`` can overflow or underflow, and ``x = +-1`` stays
    exactly fixed.

    Args:
        x: points, shape (m,)
        z: effective times ``t + W_t``, shape (n,)

    Returns:
        array of shape (n, m)
    """
    x = np.asarray(x, dtype=np.float64)[None, :]
    z = np.asarray(z, dtype=np.float64)[:, None]
    return _dw(x, z)


def _dw(x, z):
    q = (1.0 - x) * (1.0 + x)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = np.exp(np.log(q) - 2.0 * z - 2.0 * np.log(np.abs(x)))
        out = np.copysign(1.0 / np.sqrt(1.0 + r), x)
    out = np.where(q == 0.0, np.copysign(1.0, x), out)
    return np.where(x == 0.0, 0.0, out)


def _poly(X, coef, powers):
    # X (m, d); coef (d, K); powers (d, K, d) -> (m, d)
    mono = np.prod(X[:, None, None, :] ** powers[None, :, :, :], axis=-1)
    return np.sum(mono * coef[None, :, :], axis=-1)


def _heun_increment(X, h, dw, drift_c, drift_p, diff_c, diff_p):
    f0 = _poly(X, drift_c, drift_p)
    g0 = _poly(X, diff_c, diff_p)
    Xp = X + f0 * h + g0 * dw
    f1 = _poly(Xp, drift_c, drift_p)
    g1 = _poly(Xp, diff_c, diff_p)
    return 0.5 * (f0 + f1) * h + 0.5 * (g0 + g1) * dw


def heun_forward(X, W, h, drift_c, drift_p, diff_c, diff_p):
    """Stratonovich Heun scheme driven by Brownian levels ``W`` at the step nodes.

    ``h`` may be negative only through the caller's choice of node times;
    the scheme itself is the same.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    for k in range(W.shape[0] - 1):
        dw = W[k + 1] - W[k]
        X = X + _heun_increment(X, h, dw, drift_c, drift_p, diff_c, diff_p)
    return X


def heun_inverse(Y, W, h, drift_c, drift_p, diff_c, diff_p, max_iter=60, tol=1e-15):
    """Undo ``heun_forward`` step by step (fixed-point solve per step)."""
    Y = np.array(Y, dtype=np.float64, copy=True)
    for k in range(W.shape[0] - 2, -1, -1):
        dw = W[k + 1] - W[k]
        Z = Y - _heun_increment(Y, h, dw, drift_c, drift_p, diff_c, diff_p)
        for _ in range(max_iter):
            Zn = Y - _heun_increment(Z, h, dw, drift_c, drift_p, diff_c, diff_p)
            delta = np.max(np.abs(Zn - Z)) if Zn.size else 0.0
            Z = Zn
            if delta <= tol:
                break
        Y = Z
    return Y


def double_well_pairs(x, z):
    """Elementwise version of :func:`double_well_grid`: ``x[i]`` at ``z[i]``."""
    return _dw(np.asarray(x, dtype=np.float64), np.asarray(z, dtype=np.float64))
