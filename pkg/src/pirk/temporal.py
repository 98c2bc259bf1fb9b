"""Temporal branch: frame affinities, balanced transport kernels, gating.

Frame descriptors come from spatial mean/max pooling; their pairwise inner
products give B,T,T affinity maps. Gaussian kernels over the centered maps
are symmetrized, balanced toward double stochasticity, mixed by how
balanced each already is, shrunk toward row means, and finally turned into
a per-frame gate through a small self-attention block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError, NumericalDomainError

SINKHORN_TOL = 1e-6
SINKHORN_SHIFT = 1e-9


@dataclass(frozen=True)
class TemporalConfig:
    tau_min: float = 0.1
    tau_scale: float = 1.0
    eps: float = 1e-6
    gamma_w: float = 0.1
    sinkhorn_iters: int = 5
    gamma_gain: float = 1.0
    beta_bias: float = 0.0
    attn_hidden: int = 16

    def __post_init__(self):
        if self.tau_min <= 0 or self.eps <= 0:
            raise InvalidArgumentError("tau_min and eps must be > 0")
        if self.sinkhorn_iters < 1:
            raise InvalidArgumentError("sinkhorn_iters must be >= 1")
        if self.gamma_w < 0:
            raise InvalidArgumentError("gamma_w must be >= 0")


def temporal_affinity(x) -> tuple:
    """Mean- and max-pooled frame affinity maps, each mean-centered per
    batch element. Entries are frame-descriptor inner products over C."""
    x = ad.as_tensor(x)
    if x.ndim != 5:
        raise InvalidArgumentError(f"expected B,T,C,H,W input, got {x.shape}")
    b, t, c = x.shape[0], x.shape[1], x.shape[2]
    if t < 2:
        raise InvalidArgumentError(f"need at least 2 frames, got T={t}")
    flat = x.reshape((b, t, c, -1))
    desc_avg = flat.mean(axis=3)
    desc_max = flat.max(axis=3)
    maps = []
    for desc in (desc_avg, desc_max):
        m = (desc @ desc.swapaxes(1, 2)) / float(c)
        maps.append(m - m.mean(axis=(1, 2), keepdims=True))
    return maps[0], maps[1]


def adaptive_temperature(m_avg, m_max, cfg: TemporalConfig) -> Tensor:
    """Per-batch-element temperature grown by the joint map variance."""
    v_avg = ad.variance(ad.as_tensor(m_avg), axis=(1, 2))
    v_max = ad.variance(ad.as_tensor(m_max), axis=(1, 2))
    return cfg.tau_min + cfg.tau_scale * ad.sqrt(
        (v_avg + v_max) * 0.5 + cfg.eps
    )


def transport_kernel(m, tau) -> Tensor:
    """Row-stochastic Gaussian kernel softmax_j(-m_ij^2 / tau_b)."""
    m = ad.as_tensor(m)
    tau = ad.as_tensor(tau)
    if np.any(tau.data <= 0):
        raise InvalidArgumentError("tau must be positive")
    scale = tau.reshape((-1, 1, 1)) if tau.ndim == 1 else tau
    return ad.softmax(-(m * m) / scale, axis=-1)


def symmetrize(k) -> Tensor:
    k = ad.as_tensor(k)
    return (k + k.swapaxes(-1, -2)) * 0.5


def doubly_stochastic_residual(k: np.ndarray) -> float:
    """Worst absolute deviation of any row or column sum from 1."""
    k = np.asarray(k)
    return float(
        max(
            np.abs(k.sum(axis=-1) - 1.0).max(),
            np.abs(k.sum(axis=-2) - 1.0).max(),
        )
    )


def sinkhorn_normalize(k, iters: int, tol: float = SINKHORN_TOL,
                       shift: float = SINKHORN_SHIFT) -> Tensor:
    """Balance a nonnegative B,T,T kernel toward double stochasticity.

    Entries are lifted by `shift` first and must then be strictly positive.
    Exactly symmetric inputs are scaled by 1/sqrt(rowsum_i * colsum_j) per
    sweep, which keeps them symmetric at machine precision; anything else
    gets classic alternating row-then-column normalization. Both schemes
    share their fixed points (doubly stochastic matrices) and stop early
    once every row/column sum is within `tol` of 1.
    """
    k = ad.as_tensor(k)
    k = k + shift
    if np.any(k.data <= 0):
        raise NumericalDomainError("kernel not positive after shift")
    symmetric = bool(
        np.array_equal(k.data, k.data.swapaxes(-1, -2))
    )
    for _ in range(iters):
        if doubly_stochastic_residual(k.data) < tol:
            break
        if symmetric:
            r = k.sum(axis=-1, keepdims=True)
            c = k.sum(axis=-2, keepdims=True)
            k = k / (ad.sqrt(r) * ad.sqrt(c))
        else:
            k = k / k.sum(axis=-1, keepdims=True)
            k = k / k.sum(axis=-2, keepdims=True)
    return k


def mix_kernels(k_g, k_l, eps: float = 1e-6) -> tuple:
    """Convex combination favouring the kernel with more balanced sums.

    Balance score v = Var(row sums) + Var(col sums); the weights are a
    softmax of -v/(v_g + v_l + eps), so equal imbalance gives 0.5/0.5 and
    the more balanced kernel always gets the larger weight.
    """
    k_g, k_l = ad.as_tensor(k_g), ad.as_tensor(k_l)
    if k_g.shape != k_l.shape:
        raise InvalidArgumentError("kernel shapes must match")
    scores = []
    for k in (k_g, k_l):
        v = ad.variance(k.sum(axis=-1), axis=-1) + ad.variance(
            k.sum(axis=-2), axis=-1
        )
        scores.append(v)
    v_g, v_l = scores
    s = v_g + v_l + eps
    e_g, e_l = ad.exp(-v_g / s), ad.exp(-v_l / s)
    z = e_g + e_l
    lam_g, lam_l = e_g / z, e_l / z
    b = k_g.shape[0]
    mixed = lam_g.reshape((b, 1, 1)) * k_g + lam_l.reshape((b, 1, 1)) * k_l
    return lam_g, lam_l, mixed


def wasserstein_regularize(k, gamma_w: float) -> Tensor:
    """Shrink each entry by gamma_w times its absolute deviation from the
    row mean; uniform rows are fixed points."""
    if gamma_w < 0:
        raise InvalidArgumentError("gamma_w must be >= 0")
    k = ad.as_tensor(k)
    row_mean = k.mean(axis=-1, keepdims=True)
    return k - gamma_w * ad.absolute(k - row_mean)


def temporal_branch_params(cfg: TemporalConfig, T: int, rng) -> dict:
    """Learnable parameters of the gating head.

    The T->h projection starts with identical rows, so each token initially
    sees only its row sum of the attention map; that keeps the whole gate
    equivariant to frame permutations at initialization.
    """
    h = cfg.attn_hidden
    proj_row = rng.normal(0.0, 1.0, size=h) / T
    return {
        "temporal.gamma": Tensor(float(cfg.gamma_gain), requires_grad=True),
        "temporal.beta": Tensor(float(cfg.beta_bias), requires_grad=True),
        "temporal.proj_w": Tensor(np.tile(proj_row, (T, 1)), requires_grad=True),
        "temporal.proj_b": Tensor(np.zeros(h), requires_grad=True),
        "temporal.wq": Tensor(rng.normal(0, 1 / np.sqrt(h), (h, h)), requires_grad=True),
        "temporal.wk": Tensor(rng.normal(0, 1 / np.sqrt(h), (h, h)), requires_grad=True),
        "temporal.wv": Tensor(rng.normal(0, 1 / np.sqrt(h), (h, h)), requires_grad=True),
        "temporal.gate_w": Tensor(rng.normal(0, 1 / np.sqrt(h), (h, 1)), requires_grad=True),
        "temporal.gate_b": Tensor(0.0, requires_grad=True),
    }


def temporal_gate(x, cfg: TemporalConfig, params: dict) -> Tensor:
    """Per-frame gate in (0,1)^{B,T} from the regularized transport mix."""
    x = ad.as_tensor(x)
    m_avg, m_max = temporal_affinity(x)
    tau = adaptive_temperature(m_avg, m_max, cfg)
    k_g = sinkhorn_normalize(symmetrize(transport_kernel(m_avg, tau)),
                             cfg.sinkhorn_iters)
    k_l = sinkhorn_normalize(symmetrize(transport_kernel(m_max, tau)),
                             cfg.sinkhorn_iters)
    _, _, mixed = mix_kernels(k_g, k_l, cfg.eps)
    mixed = ad.clip(wasserstein_regularize(mixed, cfg.gamma_w), 0.0, None)
    attn_map = ad.sigmoid(params["temporal.gamma"] * mixed
                          + params["temporal.beta"])
    tokens = attn_map @ params["temporal.proj_w"] + params["temporal.proj_b"]
    q = tokens @ params["temporal.wq"]
    k = tokens @ params["temporal.wk"]
    v = tokens @ params["temporal.wv"]
    weights = ad.softmax((q @ k.swapaxes(1, 2)) / np.sqrt(cfg.attn_hidden),
                         axis=-1)
    tokens = tokens + weights @ v
    logits = tokens @ params["temporal.gate_w"] + params["temporal.gate_b"]
    b, t = x.shape[0], x.shape[1]
    return ad.sigmoid(logits.reshape((b, t)))


def apply_temporal_branch(x, cfg: TemporalConfig, params: dict) -> Tensor:
    """x * broadcast(gate) + x, gate broadcast over channels and space."""
    x = ad.as_tensor(x)
    g = temporal_gate(x, cfg, params)
    b, t = x.shape[0], x.shape[1]
    return x * g.reshape((b, t, 1, 1, 1)) + x
