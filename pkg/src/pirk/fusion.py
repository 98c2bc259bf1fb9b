"""Consistency-driven fusion of the temporal and spectral branches.

Each branch is scored by how little its output moves under a
characteristic perturbation (frame masking/shuffling for the temporal
path, variance-scaled spectral noise for the frequency path); the scores
become convex-up-to-eps weights on the branch outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class FusionConfig:
    eps: float = 1e-8
    shuffle_fraction: float = 0.25
    mode: str = "shuffle"
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidArgumentError("eps must be > 0")
        if not 0.0 <= self.shuffle_fraction <= 1.0:
            raise InvalidArgumentError("shuffle_fraction must be in [0, 1]")
        if self.mode not in ("mask", "shuffle"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class PerturbationPlan:
    """Frozen draw of which frames are touched and how they move."""
    indices: np.ndarray
    permuted: np.ndarray


@dataclass
class StabilityScores:
    s_t: Tensor  # per batch element, in [0, 1] after clamping
    s_s: Tensor


def sample_perturbation_plan(t: int, cfg: FusionConfig, rng) -> PerturbationPlan:
    n = int(np.ceil(cfg.shuffle_fraction * t))
    indices = np.sort(rng.choice(t, size=n, replace=False))
    permuted = indices[rng.permutation(n)]
    return PerturbationPlan(indices=indices, permuted=permuted)


def perturb_temporal(x, cfg: FusionConfig, rng=None, plan=None) -> Tensor:
    """Zero (mask) or reorder (shuffle) a random ceil(fraction*T)-subset of
    frames. Pass `plan` to reuse a frozen draw."""
    x = ad.as_tensor(x)
    t = x.shape[1]
    if plan is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        plan = sample_perturbation_plan(t, cfg, rng)
    if plan.indices.size == 0:
        return x
    if cfg.mode == "mask":
        keep = np.ones(t)
        keep[plan.indices] = 0.0
        return x * Tensor(keep.reshape(1, t, 1, 1, 1))
    order = np.arange(t)
    order[plan.indices] = plan.permuted
    return x[(slice(None), order)]


def _cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity; rows with a zero-norm factor score 0."""
    num = (a * b).sum(axis=1)
    denom = ad.sqrt((a * a).sum(axis=1)) * ad.sqrt((b * b).sum(axis=1))
    ok = (denom.data > 0).astype(np.float64)
    return (num * Tensor(ok)) / (denom + Tensor(1.0 - ok))


def stability_scores(x, temporal_branch, spectral_embedder, cfg: FusionConfig,
                     rng=None, *, clamp_lo: float = 0.01, clamp_hi: float = 1.0,
                     plan=None, spectral_noise=None,
                     clean_temporal=None) -> StabilityScores:
    """Clamped cosine agreement of each branch with its perturbed self.

    temporal_branch maps a clip batch to a clip batch; spectral_embedder
    maps it to B,D,H,W responses. The spectral perturbation reuses the
    branch's clamped per-slice variance as its noise scale. Pass
    clean_temporal to reuse an already-computed clean branch output.
    """
    x = ad.as_tensor(x)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    clean_t = clean_temporal if clean_temporal is not None else temporal_branch(x)
    noisy_t = temporal_branch(perturb_temporal(x, cfg, rng=rng, plan=plan))
    s_t = _cosine_rows(clean_t.mean(axis=(1, 3, 4)), noisy_t.mean(axis=(1, 3, 4)))

    emb = spectral_embedder(x)
    scale = ad.clip(ad.variance(emb, axis=(2, 3), keepdims=True),
                    clamp_lo, clamp_hi)
    if spectral_noise is None:
        spectral_noise = rng.standard_normal(emb.shape)
    noisy_emb = emb + scale * Tensor(spectral_noise)
    s_s = _cosine_rows(emb.mean(axis=(2, 3)), noisy_emb.mean(axis=(2, 3)))

    return StabilityScores(s_t=ad.clip(s_t, 0.0, None),
                           s_s=ad.clip(s_s, 0.0, None))


def fusion_weights(scores: StabilityScores, eps: float) -> tuple:
    """lambda_b = s_b / (s_t + s_s + eps), per batch element."""
    z = scores.s_t + scores.s_s + eps
    return scores.s_t / z, scores.s_s / z


def fuse(x_t, x_s, scores: StabilityScores, eps: float) -> Tensor:
    """Stability-weighted blend of the two branch outputs."""
    x_t, x_s = ad.as_tensor(x_t), ad.as_tensor(x_s)
    if x_t.shape != x_s.shape:
        raise InvalidArgumentError("branch outputs must share a shape")
    lam_t, lam_s = fusion_weights(scores, eps)
    b = x_t.shape[0]
    expand = (b,) + (1,) * (x_t.ndim - 1)
    return lam_t.reshape(expand) * x_t + lam_s.reshape(expand) * x_s
