"""Proposal reranking with start/center/end context.

Each proposal is flanked by a start part and an end part half its own
duration; the three parts are average-pooled over the feature sequence and
concatenated. A logistic-regression scorer then replaces the upstream score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureSequence, Proposal, Stage, TemporalSegment, ValidationError, dump_json, load_json
from .evaluation import ranked
from .quantize import average_pool


def expand_context(p: TemporalSegment, duration: float, fps: float = 1.0) -> tuple[TemporalSegment, TemporalSegment, TemporalSegment]:
    if p.end > duration + 1e-9:
        raise ValidationError(f"segment {p.as_list()} outside [0, {duration}]")
    d = p.end - p.start
    if not d > 0:
        raise ValidationError("zero-length proposal")
    stub = min(1.0 / fps, duration)
    a = max(0.0, p.start - d / 2)
    start = TemporalSegment(a, p.start) if p.start > a else TemporalSegment(0.0, stub)
    b = min(duration, p.end + d / 2)
    end = TemporalSegment(p.end, b) if b > p.end else TemporalSegment(max(0.0, duration - stub), duration)
    return start, p, end


def overlapping_steps(part: TemporalSegment, fps: float, T: int) -> tuple[int, int]:
    """Time steps ``[i, j)`` whose cell ``[t/fps, (t+1)/fps)`` intersects ``part``."""
    i = max(0, int(math.floor(part.start * fps + 1e-9)))
    j = min(T, int(math.ceil(part.end * fps - 1e-9)))
    if j <= i:
        # fall back to the single nearest step
        t = min(T - 1, max(0, int(math.floor(part.center * fps))))
        return t, t + 1
    return i, j


def proposal_representation(parts, features: FeatureSequence, fps: float) -> np.ndarray:
    x = features.values if isinstance(features, FeatureSequence) else np.asarray(features)
    pooled = []
    for part in parts:
        i, j = overlapping_steps(part, fps, x.shape[0])
        pooled.append(average_pool(x[i:j]))
    return np.concatenate(pooled)


def represent(proposal: Proposal, features: FeatureSequence, fps: float, duration: float | None = None) -> np.ndarray:
    if duration is None:
        duration = features.T / fps
    seg = proposal.segment
    if seg.end > duration:
        seg = TemporalSegment(seg.start, duration) if seg.start < duration else seg
    return proposal_representation(expand_context(seg, duration, fps), features, fps)


@dataclass
class PrnModel:
    weights: np.ndarray
    bias: float = 0.0
    trained: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValidationError("PRN parameters must be finite")

    def score(self, reps: np.ndarray) -> np.ndarray:
        z = np.asarray(reps) @ self.weights + self.bias
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": float(self.bias)}

    @classmethod
    def from_json(cls, obj) -> "PrnModel":
        if not isinstance(obj, dict) or set(obj) != {"weights", "bias"}:
            raise ValidationError("PRN model JSON must have exactly the keys 'weights' and 'bias'")
        return cls(np.asarray(obj["weights"], dtype=np.float64), float(obj["bias"]), trained=True)

    def save(self, path) -> None:
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "PrnModel":
        return cls.from_json(load_json(path))


def train_prn(
    representations,
    tious,
    lr: float = 0.1,
    epochs: int = 200,
    seed: int = 0,
    pos_tiou: float = 0.7,
    neg_tiou: float = 0.3,
) -> PrnModel:
    """Logistic regression by plain per-example SGD; mid-tIoU examples are dropped."""
    X = np.asarray(representations, dtype=np.float64)
    t = np.asarray(tious, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("PRN training corpus is empty")
    keep = (t >= pos_tiou) | (t < neg_tiou)
    X, y = X[keep], (t[keep] >= pos_tiou).astype(np.float64)
    if not y.any() or y.all():
        raise ValidationError("PRN training needs at least one positive and one negative example")
    rng = np.random.default_rng(seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(epochs):
        for i in rng.permutation(len(y)):
            z = X[i] @ w + b
            g = 0.5 * (1.0 + math.tanh(0.5 * z)) - y[i]
            w -= lr * g * X[i]
            b -= lr * g
    return PrnModel(w, float(b), trained=True)


def rerank(
    model: PrnModel,
    proposals: Sequence[Proposal],
    features: FeatureSequence,
    fps: float,
    K: int = 100,
    blend: float = 0.0,
) -> list[Proposal]:
    """Rescore with the PRN and keep the top ``K``; ``blend`` mixes in the upstream score."""
    if not model.trained:
        raise ValidationError("PRN model is untrained")
    if not proposals:
        return []
    reps = np.stack([represent(p, features, fps) for p in proposals])
    scores = model.score(reps)
    if blend:
        scores = (1.0 - blend) * scores + blend * np.array([p.score for p in proposals])
    out = [p.with_score(float(np.clip(s, 0.0, 1.0)), Stage.PRN) for p, s in zip(proposals, scores)]
    return ranked(out)[:K]
