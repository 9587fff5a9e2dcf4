"""Compiled scaled forward-backward recursions.

All kernels take effective emission values that have already been shifted by
their per-position maximum in log space, so entries are in [0, 1] with at
least one entry equal to one per row.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def forward_scaled(alpha, beta, emis):
    """Return scaled forward vectors, scale factors and a failure position.

    The failure position is -1 when the recursion succeeded.
    """
    T, K = emis.shape
    f = np.zeros((T, K))
    c = np.ones(T)
    s = 0.0
    for k in range(K):
        f[0, k] = alpha[k] * emis[0, k]
        s += f[0, k]
    if not s > 0.0:
        return f, c, 0
    c[0] = s
    for k in range(K):
        f[0, k] /= s
    for t in range(1, T):
        s = 0.0
        for k in range(K):
            acc = 0.0
            for j in range(K):
                acc += f[t - 1, j] * beta[j, k]
            f[t, k] = acc * emis[t, k]
            s += f[t, k]
        if not s > 0.0:
            return f, c, t
        c[t] = s
        for k in range(K):
            f[t, k] /= s
    return f, c, -1


@njit(cache=True, nogil=True)
def forward_backward_scaled(alpha, beta, emis):
    """Return ``(gamma, xi, c, fail)`` for one sequence."""
    T, K = emis.shape
    f, c, fail = forward_scaled(alpha, beta, emis)
    gamma = np.zeros((T, K))
    xi = np.zeros((max(T - 1, 0), K, K))
    if fail >= 0:
        return gamma, xi, c, fail
    b = np.ones((T, K))
    for t in range(T - 2, -1, -1):
        for j in range(K):
            acc = 0.0
            for k in range(K):
                acc += beta[j, k] * emis[t + 1, k] * b[t + 1, k]
            b[t, j] = acc / c[t + 1]
    for t in range(T):
        for k in range(K):
            gamma[t, k] = f[t, k] * b[t, k]
    for t in range(1, T):
        for j in range(K):
            fj = f[t - 1, j] / c[t]
            for k in range(K):
                xi[t - 1, j, k] = fj * beta[j, k] * emis[t, k] * b[t, k]
    return gamma, xi, c, -1
