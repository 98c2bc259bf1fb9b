"""Top-k accuracy, macro/micro F1 at two label granularities, and their
combined mean, reported as percentages."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class PredictionBatch:
    scores: np.ndarray  # N x K per-action scores
    action_labels: np.ndarray
    body_labels: np.ndarray
    action_to_body: dict


@dataclass(frozen=True)
class MetricsReport:
    top1_body: float
    top1_action: float
    top5_action: float
    f1_macro_body: float
    f1_micro_body: float
    f1_macro_action: float
    f1_micro_action: float
    f1_mean: float

    def to_json(self) -> str:
        payload = {k: round(v, 2) for k, v in asdict(self).items()}
        return json.dumps(payload, sort_keys=True, indent=2)


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Percent of rows whose label is among the k best scores; score ties
    resolve toward the lower class index."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    K = scores.shape[1]
    if not 1 <= k <= K:
        raise InvalidArgumentError(f"need 1 <= k <= {K}, got {k}")
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    hits = (ranked == labels[:, None]).any(axis=1)
    return float(hits.mean() * 100.0)


def top1_predictions(scores: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(scores), axis=1)


def f1(labels: np.ndarray, predictions: np.ndarray, averaging: str,
       n_classes: int = None) -> float:
    """Macro: unweighted mean of per-class F1, counting classes absent from
    both labels and predictions as 0. Micro: F1 of the pooled counts, which
    equals accuracy for single-label data."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if n_classes is None:
        n_classes = int(max(labels.max(), predictions.max())) + 1
    if averaging == "micro":
        return float((labels == predictions).mean() * 100.0)
    if averaging != "macro":
        raise InvalidArgumentError(f"unknown averaging {averaging!r}")
    scores = []
    for c in range(n_classes):
        tp = np.sum((predictions == c) & (labels == c))
        fp = np.sum((predictions == c) & (labels != c))
        fn = np.sum((predictions != c) & (labels == c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores) * 100.0)


def f1_mean(f1_body_macro: float, f1_body_micro: float,
            f1_action_macro: float, f1_action_micro: float) -> float:
    """Arithmetic mean of the four F1 components (percent)."""
    for v in (f1_body_macro, f1_body_micro, f1_action_macro, f1_action_micro):
        if not 0.0 <= v <= 100.0:
            raise InvalidArgumentError("F1 components must lie in [0, 100]")
    return (f1_body_macro + f1_body_micro + f1_action_macro + f1_action_micro) / 4.0


def compute_report(batch: PredictionBatch) -> MetricsReport:
    scores = np.asarray(batch.scores, dtype=np.float64)
    K = scores.shape[1]
    pred_action = top1_predictions(scores)
    body_map = np.array([batch.action_to_body[a] for a in range(K)])
    pred_body = body_map[pred_action]
    n_bodies = int(body_map.max()) + 1
    fmacro_b = f1(batch.body_labels, pred_body, "macro", n_bodies)
    fmicro_b = f1(batch.body_labels, pred_body, "micro", n_bodies)
    fmacro_a = f1(batch.action_labels, pred_action, "macro", K)
    fmicro_a = f1(batch.action_labels, pred_action, "micro", K)
    return MetricsReport(
        top1_body=float((pred_body == batch.body_labels).mean() * 100.0),
        top1_action=topk_accuracy(scores, batch.action_labels, 1),
        top5_action=topk_accuracy(scores, batch.action_labels, min(5, K)),
        f1_macro_body=fmacro_b,
        f1_micro_body=fmicro_b,
        f1_macro_action=fmacro_a,
        f1_micro_action=fmicro_a,
        f1_mean=f1_mean(fmacro_b, fmicro_b, fmacro_a, fmicro_a),
    )
