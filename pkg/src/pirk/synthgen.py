"""Synthetic micro-action clips with controllable cross-person shift.

Each clip shows a Gaussian blob following an action-specific oscillatory
path; person identity warps the sampling times (tempo/phase), scales the
rendered motion (amplitude), adds a high-spatial-frequency texture
(spectral tilt), and injects Gaussian pixel noise. Splits are
person-disjoint so generalization to unseen people is measurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .errors import InvalidArgumentError

REFERENCE_PERIOD = 8.0  # frames per base oscillation at tempo 1
CHECKER_BIAS = 0.15
CHANNEL_TILT_WEIGHTS = 0.5  # geometric falloff base across channels
INTENSITY_WAVE = (0.7, 0.3)  # first/second harmonic depth of the shared wave
ENVELOPE_DEPTH = 1.0


@dataclass(frozen=True)
class PersonProfile:
    person_id: int
    amplitude: float
    tempo: float
    phase: float
    noise_sigma: float
    spectral_tilt: float

    def __post_init__(self):
        if self.amplitude <= 0 or self.tempo <= 0:
            raise InvalidArgumentError("amplitude and tempo must be > 0")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class ActionSpec:
    action_id: int
    body_id: int
    base_waveform: dict  # mode, freq, heading, radius, sigma


@dataclass
class LabeledClip:
    clip: np.ndarray  # 1,T,C,H,W
    action_id: int
    body_id: int
    person_id: int


@dataclass
class DatasetSplit:
    clips: list
    person_ids: list
    action_counts: dict


def make_action_specs(n_actions: int, n_bodies: int) -> list:
    """Deterministic action catalogue; the body class picks the trajectory
    family, the action refines frequency and heading within it."""
    if n_actions < n_bodies:
        raise InvalidArgumentError("need n_actions >= n_bodies")
    specs = []
    for a in range(n_actions):
        body = a * n_bodies // n_actions
        specs.append(ActionSpec(
            action_id=a,
            body_id=body,
            base_waveform={
                "mode": body % 3,
                "freq": 1.0 + 0.5 * (a % 3),
                "heading": 2.0 * np.pi * a / n_actions,
                "radius": 0.3,
                "sigma": 0.14 + 0.02 * (a % 2),
            },
        ))
    return specs


def trajectory(action: ActionSpec, u) -> tuple:
    """Blob center (cy, cx) in [0,1]^2 at continuous time u."""
    wf = action.base_waveform
    arg = 2.0 * np.pi * wf["freq"] * np.asarray(u, dtype=np.float64) \
        / REFERENCE_PERIOD + wf["heading"]
    r = wf["radius"]
    mode = wf["mode"]
    if mode == 0:
        cx = 0.5 + r * np.sin(arg)
        cy = 0.5 + 0.3 * r * np.sin(2.0 * arg)
    elif mode == 1:
        cx = 0.5 + 0.3 * r * np.sin(2.0 * arg)
        cy = 0.5 + r * np.sin(arg)
    else:
        cx = 0.5 + r * np.sin(arg)
        cy = 0.5 + r * np.cos(arg)
    return cy, cx, arg


def _channel_envelope(c: int, arg: np.ndarray, heading: float) -> np.ndarray:
    if c == 0:
        return np.ones_like(arg)
    order = 1 + (c - 1) // 2
    trig = np.sin if c % 2 == 1 else np.cos
    return 1.0 + ENVELOPE_DEPTH * trig(order * arg + heading)


def motion_field(action: ActionSpec, person: PersonProfile,
                 T: int, C: int, H: int, W: int) -> np.ndarray:
    """Noise- and tilt-free motion pattern (unit amplitude), T,C,H,W.

    Channel c carries the shared intensity wave times a phase-shifted
    harmonic envelope; the action-specific phase offsets survive pooling
    over time as quadrature correlations, so classes stay separable after
    global averaging while tempo/phase warps blur them.
    """
    u = person.tempo * np.arange(T) + person.phase
    cy, cx, arg = trajectory(action, u)
    d1, d2w = INTENSITY_WAVE
    wave = 1.0 + d1 * np.sin(arg) + d2w * np.sin(2.0 * arg)
    hh = (np.arange(H) + 0.5) / H
    ww = (np.arange(W) + 0.5) / W
    s2 = 2.0 * action.base_waveform["sigma"] ** 2
    d2 = ((hh[None, :, None] - cy[:, None, None]) ** 2
          + (ww[None, None, :] - cx[:, None, None]) ** 2)
    blob = np.exp(-d2 / s2)  # T,H,W
    heading = action.base_waveform["heading"]
    env = np.stack([_channel_envelope(c, arg, heading) * wave
                    for c in range(C)])  # C,T
    return env.T[:, :, None, None] * blob[:, None, :, :]


def checker_pattern(H: int, W: int) -> np.ndarray:
    hh, ww = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    return (-1.0) ** (hh + ww) + CHECKER_BIAS


def render_clip(action: ActionSpec, person: PersonProfile,
                T: int, C: int, H: int, W: int, rng) -> LabeledClip:
    """One clip: amplitude * motion + tilt * texture + pixel noise."""
    if min(T, C, H, W) < 1:
        raise InvalidArgumentError("all dims must be >= 1")
    motion = person.amplitude * motion_field(action, person, T, C, H, W)
    tilt_w = CHANNEL_TILT_WEIGHTS ** np.arange(C)
    texture = (person.spectral_tilt
               * tilt_w[None, :, None, None]
               * checker_pattern(H, W)[None, None, :, :])
    clip = motion + texture
    if person.noise_sigma > 0:
        clip = clip + person.noise_sigma * rng.standard_normal(clip.shape)
    return LabeledClip(clip=clip[None], action_id=action.action_id,
                       body_id=action.body_id, person_id=person.person_id)


@dataclass(frozen=True)
class PersonRanges:
    amplitude: tuple = (0.5, 2.0)
    tempo: tuple = (0.5, 2.0)
    tilt: tuple = (0.0, 1.0)
    noise_sigma: tuple = (0.02, 0.08)


def sample_person(person_id: int, ranges: PersonRanges, rng) -> PersonProfile:
    return PersonProfile(
        person_id=person_id,
        amplitude=float(rng.uniform(*ranges.amplitude)),
        tempo=float(rng.uniform(*ranges.tempo)),
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        noise_sigma=float(rng.uniform(*ranges.noise_sigma)),
        spectral_tilt=float(rng.uniform(*ranges.tilt)),
    )


def make_dataset(n_actions: int, n_bodies: int, n_persons: int,
                 clips_per_pair: int, dims: tuple, holdout_persons: int,
                 rng, ranges: PersonRanges = PersonRanges()) -> tuple:
    """Person-disjoint (train, test) splits; the last `holdout_persons`
    person ids are test-only and every action appears in both splits."""
    if holdout_persons >= n_persons or holdout_persons < 0:
        raise InvalidArgumentError("need 0 <= holdout_persons < n_persons")
    T, C, H, W = dims
    specs = make_action_specs(n_actions, n_bodies)
    persons = [sample_person(p, ranges, rng) for p in range(n_persons)]
    held = set(range(n_persons - holdout_persons, n_persons))
    train, test = [], []
    for person in persons:
        for action in specs:
            for _ in range(clips_per_pair):
                clip = render_clip(action, person, T, C, H, W, rng)
                (test if person.person_id in held else train).append(clip)

    def _split(clips, ids):
        counts = {}
        for lc in clips:
            counts[lc.action_id] = counts.get(lc.action_id, 0) + 1
        return DatasetSplit(clips=clips, person_ids=sorted(ids),
                            action_counts=counts)

    return (_split(train, set(range(n_persons)) - held), _split(test, held))


# -- directory serialization --------------------------------------------------

def save_dataset(out_dir, train: DatasetSplit, test: DatasetSplit,
                 params: dict) -> None:
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    for split_name, split in (("train", train), ("test", test)):
        for i, lc in enumerate(split.clips):
            fname = f"clips/{split_name}_{i:05d}.bin"
            tensorio.save_tensor(out / fname, lc.clip[0])
            entries.append({
                "file": fname,
                "split": split_name,
                "action_id": lc.action_id,
                "body_id": lc.body_id,
                "person_id": lc.person_id,
            })
    manifest = {
        "params": params,
        "train_persons": train.person_ids,
        "test_persons": test.person_ids,
        "train_action_counts": {str(k): v for k, v in sorted(train.action_counts.items())},
        "test_action_counts": {str(k): v for k, v in sorted(test.action_counts.items())},
        "clips": entries,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(data_dir) -> dict:
    """Load a generated dataset directory into stacked arrays per split."""
    data = Path(data_dir)
    with open(data / "manifest.json") as fh:
        manifest = json.load(fh)
    out = {"params": manifest["params"]}
    for split in ("train", "test"):
        rows = [e for e in manifest["clips"] if e["split"] == split]
        clips = np.stack([tensorio.load_tensor(data / e["file"]) for e in rows]) \
            if rows else np.zeros((0,) + tuple(manifest["params"]["dims"]))
        out[split] = {
            "x": clips,
            "action": np.array([e["action_id"] for e in rows], dtype=np.int64),
            "body": np.array([e["body_id"] for e in rows], dtype=np.int64),
            "person": np.array([e["person_id"] for e in rows], dtype=np.int64),
        }
    out["action_to_body"] = {
        s.action_id: s.body_id
        for s in make_action_specs(manifest["params"]["n_actions"],
                                   manifest["params"]["n_bodies"])
    }
    return out
