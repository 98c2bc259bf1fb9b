"""Command-line entry points: gen-data, train, eval, gradcheck, ablate."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import DatasetConfig, load_config
from .errors import InvalidArgumentError
from .synthgen import PersonRanges, load_dataset, make_dataset, save_dataset
from .training import (evaluate, gradcheck_report, load_params_bundle,
                       persist_run, run_ablation, run_training)


def _parse_dims(text: str) -> tuple:
    parts = text.lower().split("x")
    if len(parts) != 4:
        raise InvalidArgumentError("--dims expects TxCxHxW, e.g. 8x3x8x8")
    return tuple(int(p) for p in parts)


def _cmd_gen_data(args) -> int:
    dims = _parse_dims(args.dims) if args.dims else None
    base = DatasetConfig()
    ds = dataclasses.replace(
        base,
        n_persons=args.persons if args.persons is not None else base.n_persons,
        holdout_persons=args.holdout if args.holdout is not None else base.holdout_persons,
        n_actions=args.actions if args.actions is not None else base.n_actions,
        n_bodies=min(base.n_bodies, args.actions) if args.actions is not None else base.n_bodies,
        clips_per_pair=args.clips_per_pair if args.clips_per_pair is not None else base.clips_per_pair,
        T=dims[0] if dims else base.T,
        C=dims[1] if dims else base.C,
        H=dims[2] if dims else base.H,
        W=dims[3] if dims else base.W,
        seed=args.seed,
    )
    generate_dataset(ds, args.out)
    print(f"wrote dataset to {args.out}")
    return 0


def generate_dataset(ds: DatasetConfig, out_dir) -> None:
    rng = np.random.default_rng([ds.seed])
    ranges = PersonRanges(amplitude=ds.amplitude_range, tempo=ds.tempo_range,
                          tilt=ds.tilt_range, noise_sigma=ds.noise_sigma_range)
    train, test = make_dataset(ds.n_actions, ds.n_bodies, ds.n_persons,
                               ds.clips_per_pair, ds.dims,
                               ds.holdout_persons, rng, ranges)
    params = {
        "n_actions": ds.n_actions,
        "n_bodies": ds.n_bodies,
        "n_persons": ds.n_persons,
        "holdout_persons": ds.holdout_persons,
        "clips_per_pair": ds.clips_per_pair,
        "dims": list(ds.dims),
        "seed": ds.seed,
    }
    save_dataset(out_dir, train, test, params)


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    data = load_dataset(args.data)
    result = run_training(cfg, data, args.seed, out_dir=args.out)
    persist_run(cfg, result, args.out, args.seed)
    if result["report"] is not None:
        print(result["report"].to_json())
    return 0


def _cmd_eval(args) -> int:
    cfg, params, meta = load_params_bundle(args.params)
    data = load_dataset(args.data)
    report = evaluate(params, cfg, data["test"], data["action_to_body"])
    Path(args.out).write_text(report.to_json() + "\n")
    print(report.to_json())
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    report = gradcheck_report(cfg, tol=args.tol)
    for name in sorted(report["groups"]):
        entry = report["groups"][name]
        status = "PASS" if entry["pass"] else "FAIL"
        print(f"{status} {name}: max_rel_err={entry['max_rel_err']:.3e}")
    print(("PASS" if report["pass"] else "FAIL")
          + f" overall: max_rel_err={report['max_rel_err']:.3e} tol={report['tol']:g}")
    return 0 if report["pass"] else 1


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    result = run_ablation(cfg, args.data, seeds, out_dir=args.out)
    for row in result["summary"]:
        print(f"{row['grid']}/{row['setting']}: "
              f"top1={row['top1_action_mean']:.2f}±{row['top1_action_std']:.2f} "
              f"f1_mean={row['f1_mean_mean']:.2f}±{row['f1_mean_std']:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pirk",
        description="Synthetic micro-action robustness experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--persons", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--actions", type=int)
    p.add_argument("--clips-per-pair", type=int)
    p.add_argument("--dims", help="TxCxHxW")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate saved parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("ablate", help="toggle-grid sweep over seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated ints")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
