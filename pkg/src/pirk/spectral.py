"""Frequency branch: DCT embedding, variance-driven perturbation, attention.

The branch embeds a clip batch into a bank of fixed orthonormal DCT
responses, roughens that embedding with a variance-weighted modulation and
variance-scaled noise, squashes through a gained tanh, and gates the input
tensor with a sigmoid attention map plus a residual path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class SpectralConfig:
    D: int = 8
    k: int = 7
    alpha: float = 0.1
    beta_mod: float = 0.1
    clamp_lo: float = 0.01
    clamp_hi: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.clamp_lo <= self.clamp_hi):
            raise InvalidArgumentError("need 0 < clamp_lo <= clamp_hi")
        if self.alpha < 0 or self.beta_mod < 0:
            raise InvalidArgumentError("alpha and beta_mod must be >= 0")


@dataclass(frozen=True)
class DctFilterBank:
    kernels: np.ndarray  # D x k x k
    selection_order: list = field(default_factory=list)

    @property
    def D(self) -> int:
        return self.kernels.shape[0]

    @property
    def k(self) -> int:
        return self.kernels.shape[1]


def zigzag_order(k: int) -> list:
    """(u, v) frequency pairs by anti-diagonal, lowest frequency first."""
    order = []
    for s in range(2 * k - 1):
        diag = [(u, s - u) for u in range(max(0, s - k + 1), min(s, k - 1) + 1)]
        if s % 2 == 0:
            diag.reverse()
        order.extend(diag)
    return order


def _dct_kernel(k: int, u: int, v: int) -> np.ndarray:
    x = np.arange(k)
    au = np.sqrt(1.0 / k) if u == 0 else np.sqrt(2.0 / k)
    av = np.sqrt(1.0 / k) if v == 0 else np.sqrt(2.0 / k)
    bu = au * np.cos(np.pi * (2 * x + 1) * u / (2 * k))
    bv = av * np.cos(np.pi * (2 * x + 1) * v / (2 * k))
    return np.outer(bu, bv)


def build_dct_filter_bank(D: int, k: int) -> DctFilterBank:
    """First `D` orthonormal 2D DCT-II basis kernels in zigzag order."""
    if not 1 <= D <= k * k:
        raise InvalidArgumentError(f"need 1 <= D <= k^2, got D={D}, k={k}")
    order = zigzag_order(k)[:D]
    kernels = np.stack([_dct_kernel(k, u, v) for u, v in order])
    return DctFilterBank(kernels=kernels, selection_order=order)


def spectral_embed(x, bank: DctFilterBank) -> Tensor:
    """Average a B,T,C,H,W clip over time and channels, then correlate with
    every bank kernel (same zero padding), giving B,D,H,W responses."""
    x = ad.as_tensor(x)
    if x.ndim != 5:
        raise InvalidArgumentError(f"expected B,T,C,H,W input, got {x.shape}")
    H, W = x.shape[3], x.shape[4]
    if bank.k > H or bank.k > W:
        raise InvalidArgumentError(
            f"kernel side {bank.k} exceeds spatial extent {H}x{W}"
        )
    pooled = x.mean(axis=1).mean(axis=1, keepdims=True)  # B,1,H,W
    taps = bank.kernels[:, None, :, :]  # D,1,k,k
    return ad.conv2d(pooled, Tensor(taps))


def variance_modulation(e, beta_mod: float) -> Tensor:
    """beta * spatial population variance of each B,D slice, carrying the
    sign pattern of the embedding."""
    e = ad.as_tensor(e)
    v = ad.variance(e, axis=(2, 3), keepdims=True)
    return ad.mul(ad.mul(v, beta_mod), ad.sign(e))


def slice_noise_scale(e, clamp_lo: float, clamp_hi: float) -> Tensor:
    """Per-(B,D)-slice spatial variance clamped into [clamp_lo, clamp_hi]."""
    e = ad.as_tensor(e)
    return ad.clip(ad.variance(e, axis=(2, 3), keepdims=True), clamp_lo, clamp_hi)


def stochastic_perturb(e, cfg: SpectralConfig, rng=None, noise=None) -> Tensor:
    """alpha-scaled Gaussian noise whose per-slice std follows the clamped
    spatial variance. `noise` overrides drawing from `rng` (frozen-noise
    gradient checks); alpha == 0 short-circuits to an exact zero."""
    e = ad.as_tensor(e)
    if cfg.alpha == 0.0 and noise is None:
        return Tensor(np.zeros_like(e.data))
    if noise is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        noise = rng.standard_normal(e.shape)
    scale = slice_noise_scale(e, cfg.clamp_lo, cfg.clamp_hi)
    return ad.mul(ad.mul(scale, cfg.alpha), Tensor(noise))


def spectral_branch_params(cfg: SpectralConfig, rng) -> dict:
    """Learnable parameters: tanh gain, D->1 attention conv taps and bias."""
    return {
        "spectral.gain": Tensor(1.0, requires_grad=True),
        "spectral.attn_w": Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(cfg.D), size=(1, cfg.D, 1, 1)),
            requires_grad=True,
        ),
        "spectral.attn_b": Tensor(0.0, requires_grad=True),
    }


def apply_spectral_branch(x, cfg: SpectralConfig, params: dict, rng=None,
                          noise=None) -> Tensor:
    """Full frequency branch: x * broadcast(attention) + x.

    The attention map sigmoid(conv1x1(tanh(gain * (E + modulation + noise))))
    has shape B,1,H,W and is broadcast over the time and channel axes.
    """
    x = ad.as_tensor(x)
    bank = build_dct_filter_bank(cfg.D, cfg.k)
    e = spectral_embed(x, bank)
    e_mod = variance_modulation(e, cfg.beta_mod)
    e_noise = stochastic_perturb(e, cfg, rng=rng, noise=noise)
    bounded = ad.tanh(ad.mul(params["spectral.gain"], e + e_mod + e_noise))
    attn = ad.sigmoid(ad.conv2d(bounded, params["spectral.attn_w"])
                      + params["spectral.attn_b"])
    b, h, w = attn.shape[0], attn.shape[2], attn.shape[3]
    gate = attn.reshape((b, 1, 1, h, w))
    return x * gate + x
