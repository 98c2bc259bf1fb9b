import numpy as np
import pytest
from hypothesis import given, strategies as st

from pirk import fusion as fu
from pirk.autodiff import Tensor
from pirk.errors import InvalidArgumentError

rng = np.random.default_rng(555)


# -- perturbation -----------------------------------------------------------------

def test_perturb_zero_fraction_identity():
    cfg = fu.FusionConfig(shuffle_fraction=0.0)
    x = rng.standard_normal((2, 6, 3, 4, 4))
    out = fu.perturb_temporal(x, cfg, np.random.default_rng(0))
    assert np.array_equal(out.data, x)


def test_perturb_mask_full_fraction_zeros():
    cfg = fu.FusionConfig(mode="mask", shuffle_fraction=1.0)
    x = rng.standard_normal((2, 5, 2, 3, 3))
    out = fu.perturb_temporal(x, cfg, np.random.default_rng(0))
    assert np.all(out.data == 0.0)


def test_perturb_shuffle_touches_exactly_two_frames():
    # derived under seed 0: ceil(0.25*8)=2 chosen frames swap (5 <-> 7)
    cfg = fu.FusionConfig(mode="shuffle", shuffle_fraction=0.25)
    x = rng.standard_normal((1, 8, 2, 3, 3))
    for _ in range(2):  # reproducible across repeated draws
        out = fu.perturb_temporal(x, cfg, np.random.default_rng(0)).data
        changed = [t for t in range(8)
                   if not np.array_equal(out[0, t], x[0, t])]
        assert changed == [5, 7]
        assert np.array_equal(out[0, 5], x[0, 7])
        assert np.array_equal(out[0, 7], x[0, 5])


def test_perturb_mask_count_matches_ceiling():
    cfg = fu.FusionConfig(mode="mask", shuffle_fraction=0.25)
    x = np.ones((1, 8, 1, 2, 2))
    out = fu.perturb_temporal(x, cfg, np.random.default_rng(3)).data
    zeroed = [t for t in range(8) if np.all(out[0, t] == 0.0)]
    assert len(zeroed) == 2


def test_perturb_reproducible_across_runs():
    cfg = fu.FusionConfig(mode="shuffle", shuffle_fraction=0.5)
    x = rng.standard_normal((2, 8, 1, 2, 2))
    a = fu.perturb_temporal(x, cfg, np.random.default_rng(9)).data
    b = fu.perturb_temporal(x, cfg, np.random.default_rng(9)).data
    assert np.array_equal(a, b)


# -- stability scores ---------------------------------------------------------------

def _identity_branch(z):
    return z


def test_stability_no_perturbation_gives_unit_scores():
    cfg = fu.FusionConfig(shuffle_fraction=0.0)
    x = rng.standard_normal((3, 4, 2, 3, 3)) + 1.0
    emb0 = rng.standard_normal((3, 4, 3, 3))
    scores = fu.stability_scores(
        x, _identity_branch, lambda z: Tensor(emb0), cfg,
        np.random.default_rng(0),
        spectral_noise=np.zeros_like(emb0),
    )
    assert np.allclose(scores.s_t.data, 1.0)
    assert np.allclose(scores.s_s.data, 1.0)


def test_stability_anticorrelated_spectral_clamped_to_zero():
    cfg = fu.FusionConfig(shuffle_fraction=0.0)
    x = np.ones((1, 2, 1, 2, 2))
    emb = rng.standard_normal((1, 3, 4, 4)) + 0.5
    scale = np.clip(emb.var(axis=(2, 3), keepdims=True), 0.01, 1.0)
    noise = -2.0 * emb / scale  # noisy embedding becomes exactly -emb
    scores = fu.stability_scores(
        x, _identity_branch, lambda z: Tensor(emb), cfg,
        np.random.default_rng(0), spectral_noise=noise,
    )
    assert np.allclose(scores.s_s.data, 0.0)


def test_stability_hand_cosine_value():
    cfg = fu.FusionConfig(shuffle_fraction=0.0)
    x = np.ones((1, 2, 1, 2, 2))
    emb = np.stack([np.ones((1, 3, 3)), np.zeros((1, 3, 3))], axis=1)
    # slice variances are 0 -> scale clamps to 0.01; push pooled to (1, 1)
    noise = np.stack([np.zeros((1, 3, 3)), np.full((1, 3, 3), 100.0)], axis=1)
    scores = fu.stability_scores(
        x, _identity_branch, lambda z: Tensor(emb), cfg,
        np.random.default_rng(0), spectral_noise=noise,
    )
    assert np.allclose(scores.s_s.data, 1 / np.sqrt(2), atol=1e-12)


def test_stability_zero_norm_scores_zero():
    cfg = fu.FusionConfig(shuffle_fraction=0.0)
    x = np.zeros((2, 3, 2, 2, 2))
    emb = np.zeros((2, 2, 3, 3))
    scores = fu.stability_scores(
        x, _identity_branch, lambda z: Tensor(emb), cfg,
        np.random.default_rng(0), spectral_noise=np.zeros_like(emb),
    )
    assert np.all(scores.s_t.data == 0.0)
    assert np.all(scores.s_s.data == 0.0)


def test_stability_deterministic_given_seed():
    cfg = fu.FusionConfig(mode="shuffle", shuffle_fraction=0.5)
    x = rng.standard_normal((2, 6, 2, 3, 3))
    emb = rng.standard_normal((2, 3, 3, 3))

    def run():
        return fu.stability_scores(x, _identity_branch,
                                   lambda z: Tensor(emb), cfg,
                                   np.random.default_rng(21))

    a, b = run(), run()
    assert np.array_equal(a.s_t.data, b.s_t.data)
    assert np.array_equal(a.s_s.data, b.s_s.data)


# -- fusion ---------------------------------------------------------------------------

def _scores(st_vals, ss_vals):
    return fu.StabilityScores(s_t=Tensor(np.asarray(st_vals, dtype=float)),
                              s_s=Tensor(np.asarray(ss_vals, dtype=float)))


def test_fuse_symmetric_scores_average():
    x_t = rng.standard_normal((1, 2, 1, 2, 2))
    x_s = rng.standard_normal((1, 2, 1, 2, 2))
    out = fu.fuse(x_t, x_s, _scores([0.8], [0.8]), eps=1e-8)
    assert np.allclose(out.data, (x_t + x_s) / 2, atol=1e-8)


def test_fuse_hand_weights():
    lam_t, lam_s = fu.fusion_weights(_scores([0.9], [0.3]), eps=1e-12)
    assert np.allclose(lam_t.data, 0.75)
    assert np.allclose(lam_s.data, 0.25)


def test_fuse_degenerate_branch_excluded():
    x_t = rng.standard_normal((2, 2, 1, 2, 2))
    x_s = rng.standard_normal((2, 2, 1, 2, 2))
    out = fu.fuse(x_t, x_s, _scores([0.7, 0.5], [0.0, 0.0]), eps=1e-10)
    assert np.allclose(out.data, x_t, atol=1e-8)


def test_fuse_shape_mismatch_rejected():
    with pytest.raises(InvalidArgumentError):
        fu.fuse(np.zeros((1, 2, 1, 2, 2)), np.zeros((1, 3, 1, 2, 2)),
                _scores([1.0], [1.0]), 1e-8)


def test_fuse_identical_branches_near_identity():
    x_t = rng.standard_normal((2, 3, 1, 2, 2))
    st_v, ss_v = np.array([0.9, 0.6]), np.array([0.4, 0.8])
    eps = 1e-8
    out = fu.fuse(x_t, x_t.copy(), _scores(st_v, ss_v), eps=eps)
    bound = (eps * np.abs(x_t)
             / (st_v + ss_v).reshape(-1, 1, 1, 1, 1))
    assert np.all(np.abs(out.data - x_t) <= bound + 1e-15)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_fuse_weights_convex_and_monotone(s_t, s_s, s_t2):
    eps = 1e-8
    lam_t, lam_s = fu.fusion_weights(_scores([s_t], [s_s]), eps)
    assert lam_t.data[0] >= 0 and lam_s.data[0] >= 0
    total = lam_t.data[0] + lam_s.data[0]
    assert total <= 1.0 + 1e-12
    assert total >= 1.0 - eps / (s_t + s_s + eps) - 1e-12
    if s_t2 > s_t:
        lam_t2, _ = fu.fusion_weights(_scores([s_t2], [s_s]), eps)
        assert lam_t2.data[0] > lam_t.data[0]
