"""Central finite differences with step ``1e-6 * max(1, |x|)``."""

import numpy as np

REL_STEP = 1e-6


def fd_step(x):
    return REL_STEP * np.maximum(1.0, np.abs(x))


def fd_gradient(f, x):
    """Gradient of scalar ``f`` at a single point ``x`` (1-d array)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = fd_step(x[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return grad


def fd_jacobian(F, x):
    """Jacobian ``J[j, i] = dF_j / dx_i`` of a vector map at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        step = fd_step(x[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        cols.append((np.asarray(F(xp)) - np.asarray(F(xm))) / (xp[i] - xm[i]))
    return np.stack(cols, axis=-1)


def rel_error(analytic, numeric):
    """Elementwise ``|a - n| / max(1, |a|)``, reduced by max."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
