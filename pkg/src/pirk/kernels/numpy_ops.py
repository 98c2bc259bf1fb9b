"""Pure-numpy convolution kernels (fallback backend).

All functions operate on pre-padded inputs; padding policy lives in the
autodiff layer. Shapes: xp is B x C x Hp x Wp, w is O x C x kh x kw, and
valid correlation gives B x O x (Hp-kh+1) x (Wp-kw+1).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return np.einsum("bcijuv,ocuv->boij", win, w, optimize=True)


def conv2d_grad_weights(xp: np.ndarray, gout: np.ndarray) -> np.ndarray:
    kh = xp.shape[2] - gout.shape[2] + 1
    kw = xp.shape[3] - gout.shape[3] + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return np.einsum("bcijuv,boij->ocuv", win, gout, optimize=True)


def conv2d_grad_input(gout: np.ndarray, w: np.ndarray) -> np.ndarray:
    # gradient w.r.t. the padded input: full correlation with flipped taps
    kh, kw = w.shape[2], w.shape[3]
    gp = np.pad(gout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    win = sliding_window_view(gp, (kh, kw), axis=(2, 3))
    return np.einsum("boijuv,ocuv->bcij", win, w[:, :, ::-1, ::-1], optimize=True)
