"""Compiled inner loops for negative-sampling training."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _log_sigmoid(z):
    if z >= 0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@njit(cache=True, nogil=True)
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def sgns_grad(U, H, centers, contexts, negatives, gU, gH, with_objective):
    """Accumulate the ascent gradient of the mean batch objective into gU, gH.

    gU and gH must be zeroed by the caller. Returns the summed objective, or
    0.0 when ``with_objective`` is false (saves two logs per sample).
    """
    b = centers.shape[0]
    k = U.shape[1]
    nneg = negatives.shape[1]
    inv_b = 1.0 / b
    total = 0.0
    dh = np.empty(k)
    for i in range(b):
        c = centers[i]
        x = contexts[i]
        s = 0.0
        for d in range(k):
            s += U[x, d] * H[c, d]
        if with_objective:
            total += _log_sigmoid(s)
        g = _sigmoid(-s) * inv_b
        for d in range(k):
            dh[d] = g * U[x, d]
            gU[x, d] += g * H[c, d]
        for j in range(nneg):
            n = negatives[i, j]
            s = 0.0
            for d in range(k):
                s += U[n, d] * H[c, d]
            if with_objective:
                total += _log_sigmoid(-s)
            g = -_sigmoid(s) * inv_b
            for d in range(k):
                dh[d] += g * U[n, d]
                gU[n, d] += g * H[c, d]
        for d in range(k):
            gH[c, d] += dh[d]
    return total


@njit(cache=True, nogil=True)
def alias_draw(u, prob, alias, order):
    """Map uniforms in [0, 1) to object indices through an alias table."""
    n = prob.shape[0]
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        scaled = u[i] * n
        j = int(scaled)
        if j >= n:
            j = n - 1
        if scaled - j >= prob[j]:
            j = alias[j]
        out[i] = order[j]
    return out
