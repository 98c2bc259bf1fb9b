"""Numba-compiled convolution kernels (default backend).

Single-threaded, no fastmath: results must not depend on thread count and
should track the numpy backend to rounding error. Same calling convention
as numpy_ops (pre-padded inputs, valid correlation).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_forward(xp, w):
    B, C, Hp, Wp = xp.shape
    O, _, kh, kw = w.shape
    H = Hp - kh + 1
    W = Wp - kw + 1
    out = np.zeros((B, O, H, W))
    for b in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = 0.0
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, c, i + u, j + v] * w[o, c, u, v]
                    out[b, o, i, j] = acc
    return out


@njit(cache=True)
def conv2d_grad_weights(xp, gout):
    B, C, Hp, Wp = xp.shape
    _, O, H, W = gout.shape
    kh = Hp - H + 1
    kw = Wp - W + 1
    gw = np.zeros((O, C, kh, kw))
    for o in range(O):
        for c in range(C):
            for u in range(kh):
                for v in range(kw):
                    acc = 0.0
                    for b in range(B):
                        for i in range(H):
                            for j in range(W):
                                acc += xp[b, c, i + u, j + v] * gout[b, o, i, j]
                    gw[o, c, u, v] = acc
    return gw


@njit(cache=True)
def conv2d_grad_input(gout, w):
    B, O, H, W = gout.shape
    _, C, kh, kw = w.shape
    Hp = H + kh - 1
    Wp = W + kw - 1
    gx = np.zeros((B, C, Hp, Wp))
    for b in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    g = gout[b, o, i, j]
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                gx[b, c, i + u, j + v] += g * w[o, c, u, v]
    return gx
