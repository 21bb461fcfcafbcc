"""Fused loops for masked layers and layer norm.

Arrays are unit-major: shape (units, batch), C-contiguous, so every inner loop
runs over the batch with unit stride. Loops have a fixed order, so results
are bitwise reproducible.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sparse_affine(h, w, b, indptr, cols):
    out = indptr.shape[0] - 1
    m = h.shape[1]
    z = np.empty((out, m))
    for o in range(out):
        zo = z[o]
        zo[:] = b[o]
        for e in range(indptr[o], indptr[o + 1]):
            we = w[e]
            hc = h[cols[e]]
            for i in range(m):
                zo[i] += we * hc[i]
    return z


@njit(cache=True)
def sparse_weight_grads(g, h, indptr, cols):
    out, m = g.shape
    gw = np.empty(cols.shape[0])
    for o in range(out):
        go = g[o]
        for e in range(indptr[o], indptr[o + 1]):
            hc = h[cols[e]]
            s = 0.0
            for i in range(m):
                s += go[i] * hc[i]
            gw[e] = s
    return gw


@njit(cache=True)
def sparse_input_grads(g, w, indptr, cols, in_width):
    out, m = g.shape
    gh = np.zeros((in_width, m))
    for o in range(out):
        go = g[o]
        for e in range(indptr[o], indptr[o + 1]):
            we = w[e]
            gc = gh[cols[e]]
            for i in range(m):
                gc[i] += we * go[i]
    return gh


@njit(cache=True)
def norm_act(z, normalize, relu, eps):
    """In place: z becomes the normalized pre-activation; returns (act, inv_std)."""
    n, m = z.shape
    inv = np.ones(m)
    if normalize:
        mu = np.zeros(m)
        for j in range(n):
            zj = z[j]
            for i in range(m):
                mu[i] += zj[i]
        for i in range(m):
            mu[i] /= n
        var = np.zeros(m)
        for j in range(n):
            zj = z[j]
            for i in range(m):
                d = zj[i] - mu[i]
                zj[i] = d
                var[i] += d * d
        for i in range(m):
            inv[i] = 1.0 / np.sqrt(var[i] / n + eps)
        for j in range(n):
            zj = z[j]
            for i in range(m):
                zj[i] *= inv[i]
    act = np.empty((n, m))
    for j in range(n):
        zj = z[j]
        aj = act[j]
        for i in range(m):
            v = zj[i]
            aj[i] = v if (not relu or v > 0.0) else 0.0
    return act, inv


@njit(cache=True)
def norm_act_grad(g, zn, inv, normalize, relu):
    n, m = g.shape
    gz = np.empty((n, m))
    for j in range(n):
        gj = g[j]
        zj = zn[j]
        oj = gz[j]
        for i in range(m):
            oj[i] = gj[i] if (not relu or zj[i] > 0.0) else 0.0
    if normalize:
        mg = np.zeros(m)
        mgz = np.zeros(m)
        for j in range(n):
            oj = gz[j]
            zj = zn[j]
            for i in range(m):
                mg[i] += oj[i]
                mgz[i] += oj[i] * zj[i]
        for i in range(m):
            mg[i] /= n
            mgz[i] /= n
        for j in range(n):
            oj = gz[j]
            zj = zn[j]
            for i in range(m):
                oj[i] = inv[i] * (oj[i] - mg[i] - zj[i] * mgz[i])
    return gz
