import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from pirk import model as md
from pirk import spectral as sp
from pirk import temporal as tp
from pirk import fusion as fu
from pirk.autodiff import Tensor
from pirk.cli import generate_dataset, main
from pirk.config import (DatasetConfig, ExperimentConfig, OptimizerConfig,
                         config_from_dict, config_to_dict, load_config)
from pirk.errors import InvalidArgumentError, TrainingAbortedError
from pirk.girl import GirlConfig
from pirk.synthgen import load_dataset
from pirk.training import (Adam, gradcheck_report, run_ablation, run_training)

rng = np.random.default_rng(31337)

TINY = DatasetConfig(n_actions=4, n_bodies=2, n_persons=5, holdout_persons=2,
                     clips_per_pair=2, T=4, C=2, H=8, W=8, seed=1)


def tiny_experiment(**overrides):
    base = dict(
        dataset=TINY,
        spectral=sp.SpectralConfig(D=4, k=3),
        temporal=tp.TemporalConfig(attn_hidden=8),
        girl=GirlConfig(G=4),
        optimizer=OptimizerConfig(learning_rate=0.03, steps=60, batch_size=8),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data")
    generate_dataset(TINY, path)
    return path, load_dataset(path)


# -- forward -----------------------------------------------------------------------

def _noise(cfg, toggles, b):
    return md.sample_noise(np.random.default_rng(0), toggles, b, TINY.T,
                           TINY.H, TINY.W, cfg.spectral, cfg.fusion)


def test_forward_passthrough_when_disabled():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    params = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=0)
    x = rng.standard_normal((3, TINY.T, TINY.C, TINY.H, TINY.W))
    out = md.forward(params, x, cfg.spectral, cfg.temporal, cfg.fusion,
                     cfg.toggles, _noise(cfg, cfg.toggles, 3))
    pooled = x.mean(axis=(1, 3, 4))
    expected = pooled / np.linalg.norm(pooled, axis=1, keepdims=True)
    assert np.allclose(out.features.data, expected, atol=1e-12)
    assert np.allclose(out.logits.data,
                       pooled @ params["head.w"].data + params["head.b"].data)


def test_forward_zero_input_guards():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    params = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=0)
    x = np.zeros((2, TINY.T, TINY.C, TINY.H, TINY.W))
    out = md.forward(params, x, cfg.spectral, cfg.temporal, cfg.fusion,
                     cfg.toggles, _noise(cfg, cfg.toggles, 2))
    assert np.all(out.features.data == 0.0)
    assert np.allclose(out.logits.data, 0.0)


def test_forward_matches_module_composition():
    cfg = tiny_experiment()
    toggles = cfg.toggles
    params = md.init_params(cfg.spectral, cfg.temporal, toggles,
                            TINY.T, TINY.C, 4, seed=3)
    x = rng.standard_normal((2, TINY.T, TINY.C, TINY.H, TINY.W))
    bundle = _noise(cfg, toggles, 2)
    out = md.forward(params, x, cfg.spectral, cfg.temporal, cfg.fusion,
                     toggles, bundle)

    x_t = tp.apply_temporal_branch(x, cfg.temporal, params)
    x_s = sp.apply_spectral_branch(x, cfg.spectral, params,
                                   noise=bundle.spectral_eta)
    bank = sp.build_dct_filter_bank(cfg.spectral.D, cfg.spectral.k)
    scores = fu.stability_scores(
        x, lambda z: tp.apply_temporal_branch(z, cfg.temporal, params),
        lambda z: sp.spectral_embed(z, bank), cfg.fusion,
        clamp_lo=cfg.spectral.clamp_lo, clamp_hi=cfg.spectral.clamp_hi,
        plan=bundle.fusion_plan, spectral_noise=bundle.fusion_eta)
    fused = fu.fuse(x_t, x_s, scores, cfg.fusion.eps)
    pooled = fused.data.mean(axis=(1, 3, 4))
    assert np.allclose(out.x_out.data, fused.data, atol=1e-12)
    assert np.allclose(out.logits.data,
                       pooled @ params["head.w"].data + params["head.b"].data,
                       atol=1e-12)


def test_forward_rejects_bad_shapes():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    params = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=0)
    noise = _noise(cfg, cfg.toggles, 2)
    with pytest.raises(InvalidArgumentError):
        md.forward(params, np.zeros((2, 4, 8, 8)), cfg.spectral, cfg.temporal,
                   cfg.fusion, cfg.toggles, noise)
    with pytest.raises(InvalidArgumentError):
        md.forward(params, np.zeros((2, 4, 5, 8, 8)), cfg.spectral,
                   cfg.temporal, cfg.fusion, cfg.toggles, noise)


def test_toggles_fusion_requires_branches():
    with pytest.raises(InvalidArgumentError):
        md.Toggles(tfam_on=True, freq_on=True, temporal_on=False,
                   fusion_on=True)


def test_toggle_soundness_reduces_to_linear_model():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    params = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=7)
    assert sorted(params) == ["head.b", "head.w"]
    x = rng.standard_normal((4, TINY.T, TINY.C, TINY.H, TINY.W))
    out = md.forward(params, x, cfg.spectral, cfg.temporal, cfg.fusion,
                     cfg.toggles, _noise(cfg, cfg.toggles, 4))
    standalone = x.mean(axis=(1, 3, 4)) @ params["head.w"].data \
        + params["head.b"].data
    assert np.array_equal(out.logits.data, standalone)


def test_objective_additivity():
    cfg = tiny_experiment()
    params = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=0)
    x = rng.standard_normal((6, TINY.T, TINY.C, TINY.H, TINY.W))
    y = rng.integers(0, 4, 6)
    _, parts, _ = md.total_loss(params, x, y, cfg.spectral, cfg.temporal,
                                cfg.fusion, cfg.girl, cfg.toggles,
                                _noise(cfg, cfg.toggles, 6))
    assert abs(parts["total"] - (parts["ce"] + parts["girl_total"])) < 1e-9


# -- training ---------------------------------------------------------------------------

def test_zero_learning_rate_keeps_params(tiny_data):
    _, data = tiny_data
    cfg = tiny_experiment(optimizer=OptimizerConfig(learning_rate=0.0,
                                                    steps=20, batch_size=8))
    before = md.init_params(cfg.spectral, cfg.temporal, cfg.toggles,
                            TINY.T, TINY.C, 4, seed=0)
    result = run_training(cfg, data, seed=0)
    for name, p in result["params"].items():
        assert np.array_equal(p.data, before[name].data), name
    tops = [row["test_top1_action"] for row in result["history"]]
    assert len(set(tops)) == 1


def test_training_improves_on_train_split(tiny_data):
    _, data = tiny_data
    cfg = tiny_experiment(optimizer=OptimizerConfig(learning_rate=0.03,
                                                    steps=150, batch_size=8))
    result = run_training(cfg, data, seed=0)
    first = result["history"][0]["train_top1_action"]
    last = result["history"][-1]["train_top1_action"]
    assert last > first


def test_training_traces_deterministic(tiny_data):
    _, data = tiny_data
    cfg = tiny_experiment()
    a = run_training(cfg, data, seed=5)
    b = run_training(cfg, data, seed=5)
    assert a["history"] == b["history"]
    assert all(np.array_equal(a["params"][k].data, b["params"][k].data)
               for k in a["params"])


def test_training_aborts_on_nan(tiny_data, tmp_path, monkeypatch):
    _, data = tiny_data
    cfg = tiny_experiment()

    import pirk.training as tr

    def poisoned(*args, **kwargs):
        return Tensor(np.nan), {"total": float("nan"), "ce": float("nan"),
                                "girl_total": float("nan")}, None

    monkeypatch.setattr(tr, "total_loss", poisoned)
    with pytest.raises(TrainingAbortedError) as err:
        run_training(cfg, data, seed=0, out_dir=tmp_path)
    dump = json.loads((tmp_path / "nan_dump.json").read_text())
    assert dump["step"] == 1
    assert err.value.dump_path is not None


def test_adam_moves_toward_gradient():
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad = np.array([1.0, -1.0, 0.5])
    opt = Adam(lr=0.1)
    opt.step({"p": p})
    assert np.all(p.data[0] < 0) and np.all(p.data[1] > 0)
    assert p.grad is None


# -- gradcheck ------------------------------------------------------------------------------

def test_gradcheck_linear_head_only():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    rep = gradcheck_report(cfg, tol=1e-4, batch_size=2)
    assert rep["pass"]
    for name in ("head.w", "head.b", "input"):
        assert rep["groups"][name]["max_rel_err"] < 1e-6


def test_gradcheck_detects_corruption():
    cfg = tiny_experiment(toggles=md.Toggles(tfam_on=False, girl_on=False))
    rep = gradcheck_report(cfg, tol=1e-4, batch_size=1,
                           corrupt_group="head.w")
    assert not rep["pass"]
    assert not rep["groups"]["head.w"]["pass"]


# -- config ----------------------------------------------------------------------------------

def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidArgumentError):
        config_from_dict({"nope": {}})
    with pytest.raises(InvalidArgumentError):
        config_from_dict({"optimizer": {"lr": 0.1}})


def test_config_roundtrip(tmp_path):
    cfg = tiny_experiment()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    loaded = load_config(path)
    assert loaded == cfg


def test_config_defaults_from_empty():
    cfg = config_from_dict({})
    assert cfg.optimizer.steps == 2000
    assert cfg.optimizer.learning_rate == 1e-3
    assert cfg.girl.G == 4


# -- ablation ----------------------------------------------------------------------------------

def test_ablation_grid_shape_and_repeatability(tiny_data, tmp_path):
    data_dir, _ = tiny_data
    cfg = tiny_experiment(optimizer=OptimizerConfig(learning_rate=0.03,
                                                    steps=20, batch_size=8))
    result = run_ablation(cfg, data_dir, seeds=[0], out_dir=tmp_path)
    grids = {}
    for row in result["summary"]:
        grids.setdefault(row["grid"], []).append(row["setting"])
    assert grids == {"modules": list("abcd"), "branches": list("abcde")}
    again = run_ablation(cfg, data_dir, seeds=[0])
    assert result["cells"] == again["cells"]
    assert (tmp_path / "ablation.csv").exists()
    assert (tmp_path / "ablation.json").exists()


def test_ablation_parallel_matches_serial(tiny_data, monkeypatch):
    data_dir, _ = tiny_data
    cfg = tiny_experiment(optimizer=OptimizerConfig(learning_rate=0.03,
                                                    steps=8, batch_size=8))
    serial = run_ablation(cfg, data_dir, seeds=[0])
    monkeypatch.setenv("PIRK_THREADS", "2")
    parallel = run_ablation(cfg, data_dir, seeds=[0])
    assert serial["cells"] == parallel["cells"]


# -- CLI -----------------------------------------------------------------------------------------

def _write_cfg(path, cfg):
    path.write_text(json.dumps(config_to_dict(cfg)))
    return path


def test_cli_end_to_end(tmp_path):
    data_dir = tmp_path / "data"
    assert main(["gen-data", "--out", str(data_dir), "--seed", "3",
                 "--persons", "4", "--holdout", "1", "--actions", "4",
                 "--clips-per-pair", "1", "--dims", "4x2x8x8"]) == 0
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["params"]["dims"] == [4, 2, 8, 8]
    assert len(manifest["clips"]) == 4 * 4 * 1

    cfg = tiny_experiment(
        dataset=dataclasses.replace(TINY, n_persons=4, holdout_persons=1,
                                    clips_per_pair=1, seed=3),
        optimizer=OptimizerConfig(learning_rate=0.03, steps=25, batch_size=8))
    cfg_path = _write_cfg(tmp_path / "cfg.json", cfg)

    out_a, out_b = tmp_path / "runA", tmp_path / "runB"
    for out in (out_a, out_b):
        assert main(["train", "--data", str(data_dir), "--config",
                     str(cfg_path), "--out", str(out), "--seed", "0"]) == 0
    for fname in ("config.json", "metrics.csv", "report.json", "params.bin"):
        assert (out_a / fname).read_bytes() == (out_b / fname).read_bytes(), fname

    report_path = tmp_path / "report.json"
    assert main(["eval", "--data", str(data_dir), "--params",
                 str(out_a / "params.bin"), "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report == json.loads((out_a / "report.json").read_text())

    abl_dir = tmp_path / "abl"
    fast_cfg = _write_cfg(tmp_path / "fast.json", tiny_experiment(
        dataset=dataclasses.replace(TINY, n_persons=4, holdout_persons=1,
                                    clips_per_pair=1, seed=3),
        optimizer=OptimizerConfig(learning_rate=0.03, steps=5, batch_size=8)))
    assert main(["ablate", "--data", str(data_dir), "--config", str(fast_cfg),
                 "--seeds", "0", "--out", str(abl_dir)]) == 0
    summary = json.loads((abl_dir / "ablation.json").read_text())["summary"]
    assert len(summary) == 9


def test_cli_gradcheck_exit_codes(tmp_path):
    cfg_path = _write_cfg(tmp_path / "cfg.json", tiny_experiment(
        toggles=md.Toggles(tfam_on=False, girl_on=False)))
    assert main(["gradcheck", "--config", str(cfg_path), "--tol", "1e-4"]) == 0
    assert main(["gradcheck", "--config", str(cfg_path), "--tol", "1e-12"]) == 1


def test_cli_module_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "pirk.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
