"""Independent brute-force oracles used to pin expected values.

Everything here is naive on purpose: plain Python loops and scalar math,
sharing no code with the package beyond numpy primitives, so agreement is
evidence rather than tautology.
"""

import math

import numpy as np


def conv2d_loops(x, w):
    """Same-padded stride-1 correlation via explicit sliding windows.

    x: B,C,H,W; w: O,C,kh,kw. Zero padding split (k-1)//2 before, k//2
    after, matching the package convention.
    """
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((B, O, H, W))
    for b in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = 0.0
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                ii, jj = i + u - pt, j + v - pl
                                if 0 <= ii < H and 0 <= jj < W:
                                    acc += x[b, c, ii, jj] * w[o, c, u, v]
                    out[b, o, i, j] = acc
    return out


def central_difference(f, arr, h=1e-6):
    """Gradient of scalar f() w.r.t. `arr`, mutated entry by entry."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * h)
    return grad


def girl_brute_force(features, labels, groups, tau, eta, eps, lambda_var,
                     include_self=True):
    """Scalar-loop recomputation of the grouped contrastive objective.

    Returns (l_grp, r_var, total, risks). `groups` is a list of index
    arrays; similarities, bell weights, log-sum-exp, and the per-anchor
    normalization are all recomputed with explicit double loops.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    risks = []
    for idx in groups:
        idx = list(int(i) for i in idx)
        n = len(idx)
        anchor_terms = []
        for i in idx:
            others = [j for j in idx if include_self or j != i]
            if not others:
                anchor_terms.append(0.0)
                continue
            s_i = {j: float(features[i] @ features[j]) / tau for j in idx}
            # bell weights over the anchor's row
            raw = {j: math.exp(-0.5 * ((s_i[j] - eta) / eta) ** 2)
                   for j in others}
            z = sum(raw.values())
            lse = math.log(sum(math.exp(s_i[k]) for k in others))
            num = 0.0
            cnt = 0.0
            for j in others:
                if labels[i] == labels[j]:
                    num += (raw[j] / z) * (s_i[j] - lse)
                    cnt += 1.0
            anchor_terms.append(-num / (cnt + eps))
        risks.append(sum(anchor_terms) / n)
    risks = np.array(risks)
    l_grp = float(risks.mean())
    r_var = float(((risks - risks.mean()) ** 2).mean())
    return l_grp, r_var, l_grp + lambda_var * r_var, risks
