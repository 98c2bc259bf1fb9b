"""Desk-scale model: branch gating on raw clips, pooling, linear head.

The forward pass applies whichever branches the toggles enable, fuses (or
averages) their outputs, global-average-pools over time and space to a
per-channel vector, and produces unit-norm features for the group loss
plus logits from a linear head on the unnormalized pooled vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError
from .fusion import (FusionConfig, fuse, sample_perturbation_plan,
                     stability_scores)
from .girl import FeatureBatch, GirlConfig, girl_loss
from .spectral import (SpectralConfig, apply_spectral_branch,
                       build_dct_filter_bank, spectral_branch_params,
                       spectral_embed)
from .temporal import TemporalConfig, apply_temporal_branch, temporal_branch_params


@dataclass(frozen=True)
class Toggles:
    tfam_on: bool = True
    girl_on: bool = True
    freq_on: bool = True
    temporal_on: bool = True
    fusion_on: bool = True

    def __post_init__(self):
        if self.fusion_on and not (self.freq_on and self.temporal_on):
            raise InvalidArgumentError("fusion requires both branches enabled")

    @property
    def freq_active(self):
        return self.tfam_on and self.freq_on

    @property
    def temporal_active(self):
        return self.tfam_on and self.temporal_on

    @property
    def fusion_active(self):
        return self.tfam_on and self.fusion_on and self.freq_active \
            and self.temporal_active


@dataclass
class NoiseBundle:
    """Every stochastic draw one forward/loss evaluation consumes, so a
    frozen bundle makes the whole model a deterministic function."""
    spectral_eta: np.ndarray = None
    fusion_plan: object = None
    fusion_eta: np.ndarray = None
    girl_seed: int = 0


@dataclass
class ForwardOutput:
    features: Tensor  # B,C unit-norm rows (zero rows stay zero)
    logits: Tensor  # B,K
    x_out: Tensor


def init_params(spectral_cfg: SpectralConfig, temporal_cfg: TemporalConfig,
                toggles: Toggles, T: int, C: int, K: int, seed: int) -> dict:
    """Parameters for the enabled branches plus the classifier head.

    Each group draws from its own child stream of `seed`, so toggling one
    branch never shifts another group's initialization.
    """
    spec_ss, temp_ss, head_ss = np.random.SeedSequence(seed).spawn(3)
    params = {}
    if toggles.freq_active:
        params.update(spectral_branch_params(spectral_cfg,
                                             np.random.default_rng(spec_ss)))
    if toggles.temporal_active:
        params.update(temporal_branch_params(temporal_cfg, T,
                                             np.random.default_rng(temp_ss)))
    head_rng = np.random.default_rng(head_ss)
    params["head.w"] = Tensor(head_rng.normal(0, 1 / np.sqrt(C), (C, K)),
                              requires_grad=True)
    params["head.b"] = Tensor(np.zeros(K), requires_grad=True)
    return params


def sample_noise(rng, toggles: Toggles, B: int, T: int, H: int, W: int,
                 spectral_cfg: SpectralConfig, fusion_cfg: FusionConfig,
                 zero_spectral: bool = False) -> NoiseBundle:
    """Draw one step's stochastic tensors in a fixed order.

    zero_spectral silences the spectral perturbation (evaluation mode)
    without changing which draws the other components consume.
    """
    bundle = NoiseBundle()
    D = spectral_cfg.D
    if toggles.freq_active:
        eta = rng.standard_normal((B, D, H, W))
        bundle.spectral_eta = np.zeros((B, D, H, W)) if zero_spectral else eta
    if toggles.fusion_active:
        bundle.fusion_plan = sample_perturbation_plan(T, fusion_cfg, rng)
        bundle.fusion_eta = rng.standard_normal((B, D, H, W))
    bundle.girl_seed = int(rng.integers(2 ** 31))
    return bundle


def l2_normalize_rows(p: Tensor) -> Tensor:
    norms = ad.sqrt((p * p).sum(axis=1, keepdims=True))
    ok = (norms.data > 0).astype(np.float64)
    return (p * Tensor(ok)) / (norms + Tensor(1.0 - ok))


def forward(params: dict, x, spectral_cfg: SpectralConfig,
            temporal_cfg: TemporalConfig, fusion_cfg: FusionConfig,
            toggles: Toggles, noise: NoiseBundle) -> ForwardOutput:
    x = ad.as_tensor(x)
    if x.ndim != 5:
        raise InvalidArgumentError(f"expected B,T,C,H,W input, got {x.shape}")
    if x.shape[2] != params["head.w"].shape[0]:
        raise InvalidArgumentError(
            f"channel count {x.shape[2]} does not match head "
            f"{params['head.w'].shape}"
        )

    x_t = x_s = None
    if toggles.temporal_active:
        x_t = apply_temporal_branch(x, temporal_cfg, params)
    if toggles.freq_active:
        x_s = apply_spectral_branch(x, spectral_cfg, params,
                                    noise=noise.spectral_eta)
    if toggles.fusion_active:
        bank = build_dct_filter_bank(spectral_cfg.D, spectral_cfg.k)
        scores = stability_scores(
            x,
            lambda z: apply_temporal_branch(z, temporal_cfg, params),
            lambda z: spectral_embed(z, bank),
            fusion_cfg,
            clamp_lo=spectral_cfg.clamp_lo,
            clamp_hi=spectral_cfg.clamp_hi,
            plan=noise.fusion_plan,
            spectral_noise=noise.fusion_eta,
            clean_temporal=x_t,
        )
        x_out = fuse(x_t, x_s, scores, fusion_cfg.eps)
    elif x_t is not None and x_s is not None:
        x_out = (x_t + x_s) * 0.5
    elif x_t is not None:
        x_out = x_t
    elif x_s is not None:
        x_out = x_s
    else:
        x_out = x

    pooled = x_out.mean(axis=(1, 3, 4))  # B,C
    features = l2_normalize_rows(pooled)
    logits = pooled @ params["head.w"] + params["head.b"]
    return ForwardOutput(features=features, logits=logits, x_out=x_out)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels)
    lse = ad.logsumexp(logits, axis=1)
    picked = logits[(np.arange(labels.shape[0]), labels)]
    return (lse - picked).mean()


def total_loss(params: dict, x, labels, spectral_cfg, temporal_cfg,
               fusion_cfg, girl_cfg: GirlConfig, toggles: Toggles,
               noise: NoiseBundle):
    """Cross entropy plus (optionally) the group-invariant loss; returns
    the total tensor and a breakdown of plain floats."""
    out = forward(params, x, spectral_cfg, temporal_cfg, fusion_cfg,
                  toggles, noise)
    ce = cross_entropy(out.logits, labels)
    parts = {"ce": float(ce.data)}
    total = ce
    if toggles.girl_on:
        breakdown = girl_loss(FeatureBatch(out.features, labels), girl_cfg,
                              np.random.default_rng(noise.girl_seed))
        total = ce + breakdown.total
        parts["girl_total"] = float(breakdown.total.data)
        parts["girl_l_grp"] = float(breakdown.l_grp.data)
        parts["girl_r_var"] = float(breakdown.r_var.data)
    else:
        parts["girl_total"] = 0.0
    parts["total"] = float(total.data)
    return total, parts, out
