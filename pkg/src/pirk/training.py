"""Experiment engine: seeded training, evaluation, gradient checking, and
the ablation sweep over module toggles.

Everything is a pure function of (config, data, seed): batches, noise,
group partitions, and initialization all derive from named child streams,
so reruns reproduce artifacts byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import tensorio
from .autodiff import Tensor
from .config import ExperimentConfig, config_to_dict, config_from_dict
from .errors import InvalidArgumentError, TrainingAbortedError
from .evalkit import MetricsReport, PredictionBatch, compute_report
from .model import (Toggles, forward, init_params, sample_noise,
                    total_loss)
from .synthgen import load_dataset

EVAL_SEED = 97
FD_STEP = 1e-4


class Adam:
    """Per-parameter moment-scaled SGD (beta1=0.9, beta2=0.999)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, params: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m.get(name, 0.0) * b1 + (1 - b1) * g
            v = self.v.get(name, 0.0) * b2 + (1 - b2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.data = np.asarray(p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps))
            p.grad = None


def _stacked(split: dict):
    return split["x"], split["action"], split["body"]


def evaluate(params: dict, cfg: ExperimentConfig, split: dict,
             action_to_body: dict, eval_seed: int = EVAL_SEED,
             batch_size: int = 64) -> MetricsReport:
    """Deterministic test-time metrics: the spectral noise is silenced and
    the fusion perturbation draws from a fixed evaluation stream."""
    x, actions, bodies = _stacked(split)
    rng = np.random.default_rng([eval_seed])
    scores = []
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo:lo + batch_size]
        bundle = sample_noise(rng, cfg.toggles, xb.shape[0], xb.shape[1],
                              xb.shape[3], xb.shape[4], cfg.spectral,
                              cfg.fusion, zero_spectral=True)
        out = forward(params, xb, cfg.spectral, cfg.temporal, cfg.fusion,
                      cfg.toggles, bundle)
        scores.append(out.logits.data)
    batch = PredictionBatch(
        scores=np.concatenate(scores, axis=0),
        action_labels=actions,
        body_labels=bodies,
        action_to_body=action_to_body,
    )
    return compute_report(batch)


def _dump_nan_diagnostics(out_dir, step, idx, parts) -> Path:
    path = Path(out_dir) / "nan_dump.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({
        "step": step,
        "batch_indices": [int(i) for i in idx],
        "loss_parts": parts,
    }, indent=2, sort_keys=True))
    return path


def run_training(cfg: ExperimentConfig, data: dict, seed: int,
                 out_dir=None) -> dict:
    """Train on the loaded dataset; returns params, metric history, and the
    final held-out report."""
    train_split, test_split = data["train"], data["test"]
    x_all, y_all, _ = _stacked(train_split)
    n = x_all.shape[0]
    if n == 0:
        raise InvalidArgumentError("empty training split")
    T, C = x_all.shape[1], x_all.shape[2]
    K = int(data["params"]["n_actions"])
    opt_cfg = cfg.optimizer

    params = init_params(cfg.spectral, cfg.temporal, cfg.toggles, T, C, K,
                         seed)
    adam = Adam(opt_cfg.learning_rate)
    batch_rng = np.random.default_rng([seed, 1])
    noise_rng = np.random.default_rng([seed, 2])
    bsz = min(opt_cfg.batch_size, n)
    eval_every = max(1, opt_cfg.steps // 10)

    history = []

    def record(step, parts):
        row = {"step": step, **{k: parts[k] for k in sorted(parts)}}
        train_rep = evaluate(params, cfg, train_split, data["action_to_body"])
        row["train_top1_action"] = train_rep.top1_action
        if test_split["x"].shape[0]:
            rep = evaluate(params, cfg, test_split, data["action_to_body"])
            row["test_top1_action"] = rep.top1_action
            row["test_top1_body"] = rep.top1_body
            row["test_f1_mean"] = rep.f1_mean
        history.append(row)

    record(0, {})
    for step in range(1, opt_cfg.steps + 1):
        idx = batch_rng.choice(n, size=bsz, replace=False)
        xb, yb = x_all[idx], y_all[idx]
        bundle = sample_noise(noise_rng, cfg.toggles, bsz, T,
                              xb.shape[3], xb.shape[4], cfg.spectral,
                              cfg.fusion)
        loss, parts, _ = total_loss(params, xb, yb, cfg.spectral,
                                    cfg.temporal, cfg.fusion, cfg.girl,
                                    cfg.toggles, bundle)
        if not np.isfinite(loss.data):
            dump = _dump_nan_diagnostics(out_dir or ".", step, idx, parts)
            raise TrainingAbortedError(
                f"non-finite loss at step {step}; diagnostics in {dump}",
                dump_path=dump,
            )
        loss.backward()
        adam.step(params)
        if step % eval_every == 0 or step == opt_cfg.steps:
            record(step, parts)

    report = evaluate(params, cfg, test_split, data["action_to_body"]) \
        if test_split["x"].shape[0] else None
    return {"params": params, "history": history, "report": report,
            "dims": (T, C), "n_actions": K}


def persist_run(cfg: ExperimentConfig, result: dict, out_dir, seed: int) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    history = result["history"]
    cols = sorted({k for row in history for k in row})
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(history)
    if result["report"] is not None:
        (out / "report.json").write_text(result["report"].to_json() + "\n")
    meta = {
        "config": config_to_dict(cfg),
        "seed": seed,
        "T": result["dims"][0],
        "C": result["dims"][1],
        "n_actions": result["n_actions"],
    }
    tensorio.save_bundle(out / "params.bin", meta,
                         {k: v.data for k, v in result["params"].items()})


def load_params_bundle(path):
    meta, tensors = tensorio.load_bundle(path)
    cfg = config_from_dict(meta["config"])
    params = {k: Tensor(v, requires_grad=True) for k, v in tensors.items()}
    return cfg, params, meta


# -- gradient checking ---------------------------------------------------------

def _loss_value(params, x, labels, cfg, bundle) -> float:
    loss, _, _ = total_loss(params, x, labels, cfg.spectral, cfg.temporal,
                            cfg.fusion, cfg.girl, cfg.toggles, bundle)
    return float(loss.data)


def gradcheck_report(cfg: ExperimentConfig, tol: float = 1e-4,
                     batch_size: int = 1, corrupt_group: str = None) -> dict:
    """Analytic vs central finite-difference gradients of the frozen-noise
    loss, for the input and every parameter group.

    Parameters are jittered away from their initialization first: the
    symmetric init point deliberately zeroes some gradient paths (identical
    attention tokens), which would make their check vacuous. The per-group
    error is max|analytic - fd| normalized by the largest gradient
    magnitude in the group, floored at 1e-6 (below that, central
    differences at step 1e-4 measure only their own rounding noise).
    `corrupt_group` deliberately biases one analytic gradient to prove the
    harness can fail.
    """
    ds = cfg.dataset
    rng = np.random.default_rng([ds.seed, 17])
    B = batch_size
    x_np = rng.standard_normal((B, ds.T, ds.C, ds.H, ds.W))
    labels = rng.integers(0, ds.n_actions, size=B)
    params = init_params(cfg.spectral, cfg.temporal, cfg.toggles, ds.T, ds.C,
                         ds.n_actions, ds.seed)
    for p in params.values():
        p.data = np.asarray(p.data + 0.1 * rng.standard_normal(p.data.shape))
    bundle = sample_noise(np.random.default_rng([ds.seed, 23]), cfg.toggles,
                          B, ds.T, ds.H, ds.W, cfg.spectral, cfg.fusion)

    x = Tensor(x_np, requires_grad=True)
    loss, _, _ = total_loss(params, x, labels, cfg.spectral, cfg.temporal,
                            cfg.fusion, cfg.girl, cfg.toggles, bundle)
    loss.backward()
    analytic = {name: np.array(p.grad if p.grad is not None
                               else np.zeros_like(p.data))
                for name, p in params.items()}
    analytic["input"] = np.array(x.grad)
    if corrupt_group is not None:
        analytic[corrupt_group] = analytic[corrupt_group] + 1e-2

    targets = dict(params)
    targets["input"] = x
    report = {"tol": tol, "groups": {}}
    worst = 0.0
    for name, tensor in targets.items():
        fd = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            hi = _loss_value(params, x, labels, cfg, bundle)
            flat[i] = orig - FD_STEP
            lo = _loss_value(params, x, labels, cfg, bundle)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2 * FD_STEP)
        a = analytic[name]
        denom = max(np.abs(a).max(), np.abs(fd).max(), 1e-6)
        err = float(np.abs(a - fd).max() / denom)
        report["groups"][name] = {"max_rel_err": err, "pass": err < tol}
        worst = max(worst, err)
    report["max_rel_err"] = worst
    report["pass"] = all(g["pass"] for g in report["groups"].values())
    return report


# -- ablation sweep --------------------------------------------------------------

MODULE_GRID = [
    ("modules", "a", {"tfam_on": False, "girl_on": False}),
    ("modules", "b", {"tfam_on": True, "girl_on": False}),
    ("modules", "c", {"tfam_on": False, "girl_on": True}),
    ("modules", "d", {"tfam_on": True, "girl_on": True}),
]
BRANCH_GRID = [
    ("branches", "a", {"tfam_on": False, "girl_on": True}),
    ("branches", "b", {"tfam_on": True, "girl_on": True,
                       "freq_on": True, "temporal_on": False, "fusion_on": False}),
    ("branches", "c", {"tfam_on": True, "girl_on": True,
                       "freq_on": False, "temporal_on": True, "fusion_on": False}),
    ("branches", "d", {"tfam_on": True, "girl_on": True,
                       "freq_on": True, "temporal_on": True, "fusion_on": False}),
    ("branches", "e", {"tfam_on": True, "girl_on": True,
                       "freq_on": True, "temporal_on": True, "fusion_on": True}),
]


def _with_toggles(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    base = dataclasses.asdict(cfg.toggles)
    base.update(overrides)
    return dataclasses.replace(cfg, toggles=Toggles(**base))


def _run_cell(args):
    cfg_dict, data_dir, grid, setting, overrides, seed = args
    cfg = _with_toggles(config_from_dict(cfg_dict), overrides)
    data = load_dataset(data_dir)
    result = run_training(cfg, data, seed)
    rep = result["report"]
    return {
        "grid": grid,
        "setting": setting,
        "seed": seed,
        "toggles": dataclasses.asdict(cfg.toggles),
        "top1_action": rep.top1_action,
        "f1_mean": rep.f1_mean,
    }


def run_ablation(cfg: ExperimentConfig, data_dir, seeds, out_dir=None) -> dict:
    """Train every toggle cell over every seed; emit per-cell mean/std of
    held-out Top-1 and F1-mean. PIRK_THREADS>1 runs cells in parallel."""
    cells = [(config_to_dict(cfg), str(data_dir), grid, setting, overrides,
              seed)
             for grid, setting, overrides in MODULE_GRID + BRANCH_GRID
             for seed in seeds]
    threads = int(os.environ.get("PIRK_THREADS", "1") or "1")
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["grid"], r["setting"], r["seed"]))

    summary = []
    for grid, setting, overrides in MODULE_GRID + BRANCH_GRID:
        cell = [r for r in rows if r["grid"] == grid and r["setting"] == setting]
        top1 = np.array([r["top1_action"] for r in cell])
        f1m = np.array([r["f1_mean"] for r in cell])
        summary.append({
            "grid": grid,
            "setting": setting,
            "seeds": len(cell),
            "top1_action_mean": float(top1.mean()),
            "top1_action_std": float(top1.std()),
            "f1_mean_mean": float(f1m.mean()),
            "f1_mean_std": float(f1m.std()),
        })

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary[0].keys()))
            writer.writeheader()
            writer.writerows(summary)
        (out / "ablation.json").write_text(json.dumps(
            {"cells": rows, "summary": summary}, indent=2, sort_keys=True)
            + "\n")
    return {"cells": rows, "summary": summary}
