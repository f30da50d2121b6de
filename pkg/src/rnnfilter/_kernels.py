"""Compiled batch forward/backward passes used by the training loop.

Layout matches ``training._stack``: gate blocks of n rows stacked in the
cell's gate order (basic: i; gated: i, r, m; lstm: i, f, m, o).
"""

import math

import numpy as np
from numba import njit

BASIC, GATED, LSTM = 0, 1, 2
KIND_CODE = {"basic": BASIC, "gated": GATED, "lstm": LSTM}


@njit(cache=True)
def _sig(z):
    return 0.5 * (1.0 + math.tanh(0.5 * z))


@njit(cache=True)
def forward(kind, X, Wx, Ws, b, n):
    B, m, d = X.shape
    G = Ws.shape[0]
    S = np.zeros((B, m + 1, n))
    C = np.zeros((B, m + 1, n))
    A = np.zeros((B, m, G))  # post-activation gate values
    H = np.zeros((B, m, n))  # gated: W_ms s_prev; lstm: tanh(c)
    z = np.empty(G)
    for bi in range(B):
        for t in range(m):
            for g in range(G):
                acc = b[g]
                for k in range(d):
                    acc += Wx[g, k] * X[bi, t, k]
                if kind == GATED and g >= 2 * n:
                    h = 0.0
                    for k in range(n):
                        h += Ws[g, k] * S[bi, t, k]
                    H[bi, t, g - 2 * n] = h
                else:
                    for k in range(n):
                        acc += Ws[g, k] * S[bi, t, k]
                z[g] = acc
            if kind == BASIC:
                for k in range(n):
                    v = math.tanh(z[k])
                    A[bi, t, k] = v
                    S[bi, t + 1, k] = v
            elif kind == GATED:
                for k in range(n):
                    i = _sig(z[k])
                    r = _sig(z[n + k])
                    mm = math.tanh(z[2 * n + k] + r * H[bi, t, k])
                    A[bi, t, k] = i
                    A[bi, t, n + k] = r
                    A[bi, t, 2 * n + k] = mm
                    S[bi, t + 1, k] = (1.0 - i) * mm + i * S[bi, t, k]
            else:
                for k in range(n):
                    i = _sig(z[k])
                    f = _sig(z[n + k])
                    mm = math.tanh(z[2 * n + k])
                    o = _sig(z[3 * n + k])
                    c = f * C[bi, t, k] + i * mm
                    tc = math.tanh(c)
                    A[bi, t, k] = i
                    A[bi, t, n + k] = f
                    A[bi, t, 2 * n + k] = mm
                    A[bi, t, 3 * n + k] = o
                    C[bi, t + 1, k] = c
                    H[bi, t, k] = tc
                    S[bi, t + 1, k] = o * tc
    return S, C, A, H


@njit(cache=True)
def backward(kind, X, Ws, S, C, A, H, dS_last, n):
    """Accumulate parameter gradients given dLoss/ds_m for every example."""
    B, m, d = X.shape
    G = Ws.shape[0]
    dWx = np.zeros((G, d))
    dWs = np.zeros((G, n))
    db = np.zeros(G)
    ds = np.empty(n)
    dc = np.empty(n)
    dpx = np.empty(G)  # gradient w.r.t. the input-side pre-activation
    dps = np.empty(G)  # gradient w.r.t. the recurrent pre-activation
    ds_new = np.empty(n)
    for bi in range(B):
        for k in range(n):
            ds[k] = dS_last[bi, k]
            dc[k] = 0.0
        for t in range(m - 1, -1, -1):
            if kind == BASIC:
                for k in range(n):
                    v = A[bi, t, k]
                    dpx[k] = ds[k] * (1.0 - v * v)
                    dps[k] = dpx[k]
                    ds_new[k] = 0.0
            elif kind == GATED:
                for k in range(n):
                    i = A[bi, t, k]
                    r = A[bi, t, n + k]
                    mm = A[bi, t, 2 * n + k]
                    dam = ds[k] * (1.0 - i) * (1.0 - mm * mm)
                    dpx[k] = ds[k] * (S[bi, t, k] - mm) * i * (1.0 - i)
                    dpx[n + k] = dam * H[bi, t, k] * r * (1.0 - r)
                    dpx[2 * n + k] = dam
                    dps[k] = dpx[k]
                    dps[n + k] = dpx[n + k]
                    dps[2 * n + k] = dam * r
                    ds_new[k] = ds[k] * i
            else:
                for k in range(n):
                    i = A[bi, t, k]
                    f = A[bi, t, n + k]
                    mm = A[bi, t, 2 * n + k]
                    o = A[bi, t, 3 * n + k]
                    tc = H[bi, t, k]
                    dck = dc[k] + ds[k] * o * (1.0 - tc * tc)
                    dpx[k] = dck * mm * i * (1.0 - i)
                    dpx[n + k] = dck * C[bi, t, k] * f * (1.0 - f)
                    dpx[2 * n + k] = dck * i * (1.0 - mm * mm)
                    dpx[3 * n + k] = ds[k] * tc * o * (1.0 - o)
                    dc[k] = dck * f
                    ds_new[k] = 0.0
                for g in range(G):
                    dps[g] = dpx[g]
            for g in range(G):
                db[g] += dpx[g]
                for k in range(d):
                    dWx[g, k] += dpx[g] * X[bi, t, k]
                for k in range(n):
                    dWs[g, k] += dps[g] * S[bi, t, k]
                    ds_new[k] += dps[g] * Ws[g, k]
            for k in range(n):
                ds[k] = ds_new[k]
    return dWx, dWs, db
