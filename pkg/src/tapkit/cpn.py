"""Coarse proposals: fuse actionness channels and group them watershed-style."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ActionnessCurveSet, Proposal, Stage, TemporalSegment, ValidationError
from .nms import nms


def _default_thresholds() -> tuple[float, ...]:
    return tuple(float(x) for x in np.round(np.arange(0.05, 0.951, 0.05), 2))


@dataclass(frozen=True)
class TagConfig:
    thresholds: tuple[float, ...] = field(default_factory=_default_thresholds)
    group_fraction: float = 0.7
    dedupe_tiou: float = 0.95
    min_len_frames: int = 2
    channel_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    fusion: str = "mean"  # or "product"

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "channel_weights", tuple(float(w) for w in self.channel_weights))
        if not th or any(not 0 < t < 1 for t in th):
            raise ValidationError("TAG thresholds must lie in (0, 1)")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValidationError("TAG thresholds must be strictly increasing")
        if not 0 < self.group_fraction <= 1:
            raise ValidationError("group_fraction must lie in (0, 1]")
        if not 0 < self.dedupe_tiou <= 1:
            raise ValidationError("dedupe_tiou must lie in (0, 1]")
        if self.min_len_frames < 1:
            raise ValidationError("min_len_frames must be >= 1")
        if self.fusion not in ("mean", "product"):
            raise ValidationError(f"unknown fusion {self.fusion!r}")


def normalize_weights(weights: Sequence[float]) -> tuple[float, ...]:
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValidationError(f"weights must be non-negative with positive sum: {list(weights)}")
    return tuple(float(x) for x in w / w.sum())


def fuse_actionness(curves: ActionnessCurveSet, weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3), mode: str = "mean") -> np.ndarray:
    """Per-frame weighted average of the point, pair and recurrent channels.

    ``mode="product"`` uses the weighted geometric mean instead.
    """
    if len(weights) != 3 or any(w < 0 for w in weights):
        raise ValidationError(f"need 3 non-negative channel weights, got {list(weights)}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValidationError(f"channel weights sum to {sum(weights)}, not 1")
    channels = (curves.point, curves.pair, curves.recurrent)
    if len({c.shape for c in channels}) != 1:
        raise ValidationError("actionness channels differ in length")
    if mode == "product":
        fused = np.ones_like(curves.point)
        for w, c in zip(weights, channels):
            if w > 0:
                fused = fused * np.power(c, w)
    else:
        fused = weights[0] * channels[0] + weights[1] * channels[1] + weights[2] * channels[2]
    return np.clip(fused, 0.0, 1.0)


def find_basins(fused: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximal runs ``[a, b)`` with ``fused >= threshold``."""
    above = np.concatenate([[False], fused >= threshold, [False]])
    edges = np.flatnonzero(above[1:] != above[:-1])
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def group_basins(basins: list[tuple[int, int]], group_fraction: float) -> list[tuple[int, int]]:
    """All greedy groupings: from each basin, absorb successors while coverage >= fraction."""
    spans = []
    for i, (start, end) in enumerate(basins):
        covered = end - start
        spans.append((start, end))
        for nxt_start, nxt_end in basins[i + 1:]:
            covered += nxt_end - nxt_start
            if covered / (nxt_end - start) < group_fraction:
                break
            end = nxt_end
            spans.append((start, end))
    return spans


def merge_proposals(proposals: Sequence[Proposal], dedupe_tiou: float) -> list[Proposal]:
    """Cross-threshold dedupe; the higher-ranked of any pair at tIoU >= ``dedupe_tiou`` survives."""
    return nms(proposals, dedupe_tiou)


def watershed_tag(fused, fps: float, cfg: TagConfig = TagConfig(), video_id: str = "") -> list[Proposal]:
    fused = np.asarray(fused, dtype=np.float64)
    if fused.ndim != 1 or fused.size == 0:
        raise ValidationError("watershed_tag needs a non-empty 1-d actionness sequence")
    if not fps > 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    csum = np.concatenate([[0.0], np.cumsum(fused)])
    spans = set()
    for gamma in cfg.thresholds:
        spans.update(group_basins(find_basins(fused, gamma), cfg.group_fraction))
    candidates = []
    for a, b in sorted(spans):
        if b - a < cfg.min_len_frames:
            continue
        score = float(np.clip((csum[b] - csum[a]) / (b - a), 0.0, 1.0))
        candidates.append(Proposal(video_id, TemporalSegment(a / fps, b / fps), score, Stage.CPN))
    return merge_proposals(candidates, cfg.dedupe_tiou)


def coarse_proposals(curves: ActionnessCurveSet, cfg: TagConfig = TagConfig()) -> list[Proposal]:
    fused = fuse_actionness(curves, cfg.channel_weights, cfg.fusion)
    return watershed_tag(fused, curves.fps, cfg, curves.video_id)
