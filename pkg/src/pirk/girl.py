"""Group-invariant regularized loss over pseudo-groups of a mini-batch.

Batches of unit-norm features are split into random groups; within each
group a contrastive objective pulls same-label pairs together, with pair
weights peaked at a target similarity so moderately hard positives
dominate. The mean group risk is penalized by the variance of the
(detached) per-group risks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError

_MASK = -1e30  # additive logit mask; exp underflows to exactly 0


@dataclass(frozen=True)
class GirlConfig:
    tau_sim: float = 0.5
    eta: float = 0.5
    G: int = 4
    lambda_var: float = 1.0
    eps: float = 1e-8
    include_self_pairs: bool = True
    detach_variance: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tau_sim <= 0:
            raise InvalidArgumentError("tau_sim must be > 0")
        if self.eta == 0:
            raise InvalidArgumentError("eta must be nonzero")
        if self.G < 1:
            raise InvalidArgumentError("G must be >= 1")
        if self.lambda_var < 0:
            raise InvalidArgumentError("lambda_var must be >= 0")


@dataclass
class FeatureBatch:
    features: object  # B,C array or Tensor, rows unit-norm
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if np.any(self.labels < 0):
            raise InvalidArgumentError("labels must be nonnegative")


@dataclass(frozen=True)
class GroupPartition:
    groups: list  # disjoint int index arrays covering range(B)


@dataclass
class LossBreakdown:
    l_grp: Tensor
    r_var: Tensor
    total: Tensor
    group_risks: np.ndarray


def pairwise_similarity(fb: FeatureBatch, tau_sim: float) -> Tensor:
    """Temperature-scaled Gram matrix of the feature rows."""
    f = ad.as_tensor(fb.features)
    norms = np.sqrt((f.data * f.data).sum(axis=1))
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise InvalidArgumentError("feature rows must be unit-norm")
    return (f @ f.swapaxes(0, 1)) / tau_sim


def partition_pseudo_groups(B: int, G: int, rng) -> GroupPartition:
    """Random permutation of range(B) split into G near-equal chunks."""
    if not 1 <= G <= B:
        raise InvalidArgumentError(f"need 1 <= G <= B, got G={G}, B={B}")
    perm = rng.permutation(B)
    return GroupPartition(groups=[np.asarray(g) for g in np.array_split(perm, G)])


def gaussian_weights(s_row, eta: float, mask: np.ndarray = None) -> Tensor:
    """Normalized bell weights exp(-((s - eta)/eta)^2 / 2) along the last
    axis; `mask` (0/1) removes entries from the normalization."""
    if eta == 0:
        raise InvalidArgumentError("eta must be nonzero")
    s = ad.as_tensor(s_row)
    z = (s - eta) * (1.0 / eta)
    raw = ad.exp(-0.5 * z * z)
    if mask is not None:
        raw = raw * Tensor(mask)
    return raw / raw.sum(axis=-1, keepdims=True)


def group_loss(s_sub, labels_sub, eta: float, eps: float,
               include_self: bool = True) -> Tensor:
    """Weighted contrastive risk of one group given its similarity block.

    Per anchor: -(sum_j match_ij * w_ij * (s_ij - logsumexp_k s_ik)) over
    (sum_j match_ij + eps), averaged over anchors. With include_self=False
    the anchor itself is dropped from matches, weights, and the logsumexp.
    """
    s = ad.as_tensor(s_sub)
    labels = np.asarray(labels_sub)
    n = labels.shape[0]
    if n == 1 and not include_self:
        return Tensor(0.0)
    match = (labels[:, None] == labels[None, :]).astype(np.float64)
    if include_self:
        w = gaussian_weights(s, eta)
        lse = ad.logsumexp(s, axis=1, keepdims=True)
    else:
        off = 1.0 - np.eye(n)
        match = match * off
        w = gaussian_weights(s, eta, mask=off)
        lse = ad.logsumexp(s + Tensor(_MASK * np.eye(n)), axis=1, keepdims=True)
    per_anchor = (Tensor(match) * w * (s - lse)).sum(axis=1)
    denom = match.sum(axis=1) + eps
    return (-per_anchor / Tensor(denom)).mean()


def girl_loss(fb: FeatureBatch, cfg: GirlConfig, rng) -> LossBreakdown:
    """Mean group risk plus lambda_var times the variance of group risks.

    Group risks entering the variance are detached by default, so the
    penalty moves the reported loss but not the feature gradient; set
    detach_variance=False to let it steer optimization too.
    """
    sims = pairwise_similarity(fb, cfg.tau_sim)
    B = sims.shape[0]
    part = partition_pseudo_groups(B, cfg.G, rng)
    losses = []
    for idx in part.groups:
        block = sims[(idx[:, None], idx[None, :])]
        losses.append(group_loss(block, fb.labels[idx], cfg.eta, cfg.eps,
                                 cfg.include_self_pairs))
    g = len(losses)
    l_grp = losses[0]
    for term in losses[1:]:
        l_grp = l_grp + term
    l_grp = l_grp * (1.0 / g)
    risks = np.array([float(t.data) for t in losses])
    if cfg.detach_variance or g == 1:
        r_var = Tensor(float(np.var(risks)))
    else:
        mean_r = l_grp  # mean of group losses, still attached
        sq = None
        for term in losses:
            d = term - mean_r
            sq = d * d if sq is None else sq + d * d
        r_var = sq * (1.0 / g)
    total = l_grp + cfg.lambda_var * r_var
    return LossBreakdown(l_grp=l_grp, r_var=r_var, total=total,
                         group_risks=risks)
