"""Tubelet linking over per-frame box proposals, temporal trimming, and frame-mAP.

Linking is class-agnostic: it only uses box actionness and overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ValidationError, load_json
from .evaluation import interpolated_ap


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in vals):
            raise ValidationError(f"box {vals} outside the unit square")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(f"degenerate box {vals}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def box_iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class FrameBox:
    box: Box
    actionness: float
    label: str | None = None
    score: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.actionness <= 1.0:
            raise ValidationError(f"actionness {self.actionness} outside [0, 1]")


@dataclass(frozen=True)
class Tubelet:
    video_id: str
    start_frame: int
    boxes: tuple[tuple[Box, float], ...]
    score: float
    # (frame, index-within-frame) of each linked input box
    members: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.boxes:
            raise ValidationError("tubelet must contain at least one box")

    @property
    def length(self) -> int:
        return len(self.boxes)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.boxes)

    def to_json(self) -> dict:
        return {
            "start_frame": self.start_frame,
            "boxes": [b.as_list() for b, _ in self.boxes],
            "actionness": [a for _, a in self.boxes],
            "score": self.score,
        }


@dataclass(frozen=True)
class LinkConfig:
    overlap_weight: float = 1.0
    min_link_iou: float = 0.1
    trim_window: int = 8
    trim_threshold: float = 0.3

    def __post_init__(self):
        if self.overlap_weight < 0:
            raise ValidationError("overlap_weight must be >= 0")
        if not 0 <= self.min_link_iou <= 1 or not 0 <= self.trim_threshold <= 1:
            raise ValidationError("min_link_iou and trim_threshold must lie in [0, 1]")
        if self.trim_window < 1:
            raise ValidationError("trim_window must be >= 1")


def _as_framebox(x) -> FrameBox:
    if isinstance(x, FrameBox):
        return x
    box, act = x
    return FrameBox(box, float(act))


def _make_tubelet(video_id: str, per_frame, path: list[tuple[int, int]]) -> Tubelet:
    boxes = tuple((per_frame[t][i].box, per_frame[t][i].actionness) for t, i in path)
    score = float(np.mean([a for _, a in boxes]))
    return Tubelet(video_id, path[0][0], boxes, score, tuple(path))


def best_path(per_frame: Sequence[Sequence[FrameBox]], alive: list[np.ndarray], cfg: LinkConfig):
    """Highest-scoring path with at least one link, by dynamic programming over frame layers."""
    best_val, best_end = -math.inf, None
    value = [np.full(len(f), -math.inf) for f in per_frame]
    back: list[list] = [[None] * len(f) for f in per_frame]
    for t in range(1, len(per_frame)):
        for j, bj in enumerate(per_frame[t]):
            if not alive[t][j]:
                continue
            for i, bi in enumerate(per_frame[t - 1]):
                if not alive[t - 1][i]:
                    continue
                iou = box_iou(bi.box, bj.box)
                if iou < cfg.min_link_iou or iou == 0.0:
                    continue
                link = bi.actionness + bj.actionness + cfg.overlap_weight * iou
                cand = max(value[t - 1][i], 0.0) + link
                if cand > value[t][j]:
                    value[t][j] = cand
                    back[t][j] = i
            if value[t][j] > best_val:
                best_val, best_end = value[t][j], (t, j)
    if best_end is None:
        return None, -math.inf
    t, j = best_end
    path = [(t, j)]
    while back[t][j] is not None:
        i = back[t][j]
        started_here = not math.isfinite(value[t - 1][i])
        t, j = t - 1, i
        path.append((t, j))
        if started_here:
            break
    return path[::-1], best_val


def link_tubelets(per_frame: Sequence[Sequence], cfg: LinkConfig = LinkConfig(), video_id: str = "") -> list[Tubelet]:
    """Repeatedly extract the best linked path, then emit leftovers as single-box tubelets.

    A link from box i at frame t to box j at frame t+1 scores
    ``act_i + act_j + overlap_weight * iou(i, j)`` and needs
    ``iou >= min_link_iou`` (and a non-empty overlap).
    """
    if len(per_frame) < 1:
        raise ValidationError("need at least one frame")
    frames = [[_as_framebox(x) for x in f] for f in per_frame]
    alive = [np.ones(len(f), dtype=bool) for f in frames]
    tubelets = []
    while True:
        path, _ = best_path(frames, alive, cfg)
        if path is None:
            break
        for t, i in path:
            alive[t][i] = False
        tubelets.append(_make_tubelet(video_id, frames, path))
    for t, f in enumerate(frames):
        for i in range(len(f)):
            if alive[t][i]:
                tubelets.append(_make_tubelet(video_id, frames, [(t, i)]))
    return tubelets


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average; the window is truncated at the sequence ends."""
    n = len(values)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    start = np.arange(n) - (window - 1) // 2
    lo = np.clip(start, 0, n)
    hi = np.clip(start + window, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def temporal_trim(t: Tubelet, cfg: LinkConfig = LinkConfig()) -> Tubelet | None:
    """Keep the longest run of frames whose smoothed actionness reaches the threshold."""
    act = np.array([a for _, a in t.boxes])
    ma = moving_average(act, min(cfg.trim_window, len(act)))
    ok = np.concatenate([[False], ma >= cfg.trim_threshold, [False]])
    edges = np.flatnonzero(ok[1:] != ok[:-1])
    runs = list(zip(edges[::2], edges[1::2]))
    if not runs:
        return None
    a, b = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    boxes = t.boxes[a:b]
    members = t.members[a:b] if t.members else ()
    score = float(np.mean([x for _, x in boxes]))
    return Tubelet(t.video_id, t.start_frame + int(a), boxes, score, members)


# ---------------------------------------------------------------------------
# frame-mAP


@dataclass(frozen=True)
class FrameDetection:
    video_id: str
    frame: int
    box: Box
    label: str
    score: float


@dataclass(frozen=True)
class FrameGroundTruth:
    video_id: str
    frame: int
    box: Box
    label: str


def frame_average_precision(
    detections: Sequence[FrameDetection], gt: Sequence[FrameGroundTruth], label: str, iou: float = 0.5
) -> float:
    gts: dict[tuple[str, int], list[Box]] = {}
    for g in gt:
        if g.label == label:
            gts.setdefault((g.video_id, g.frame), []).append(g.box)
    n_pos = sum(len(v) for v in gts.values())
    used = {k: np.zeros(len(v), dtype=bool) for k, v in gts.items()}
    dets = sorted(
        (d for d in detections if d.label == label),
        key=lambda d: (-d.score, d.video_id, d.frame, d.box.as_list()),
    )
    tp = np.zeros(len(dets))
    for n, d in enumerate(dets):
        key = (d.video_id, d.frame)
        if key not in gts:
            continue
        ious = np.array([box_iou(d.box, g) for g in gts[key]])
        for j in np.argsort(-ious, kind="stable"):
            if ious[j] < iou:
                break
            if not used[key][j]:
                used[key][j] = True
                tp[n] = 1.0
                break
    return interpolated_ap(tp, n_pos)


def evaluate_frame_map(detections: Sequence[FrameDetection], gt: Sequence[FrameGroundTruth], iou: float = 0.5) -> float:
    if not gt:
        raise ValidationError("frame-mAP needs non-empty ground truth")
    labels = sorted({g.label for g in gt})
    return float(np.mean([frame_average_precision(detections, gt, lab, iou) for lab in labels]))


# ---------------------------------------------------------------------------
# JSON I/O: {"video_id": ..., "frames": [[{"box": [...], "actionness": a, "label": ..., "score": s}, ...], ...]}


def _video_records(obj) -> list[Mapping]:
    records = obj if isinstance(obj, list) else [obj]
    for r in records:
        if not isinstance(r, Mapping) or "video_id" not in r or "frames" not in r:
            raise ValidationError("per-frame file needs 'video_id' and 'frames'")
    return records


def read_per_frame(path) -> list[tuple[str, list[list[FrameBox]]]]:
    out = []
    for rec in _video_records(load_json(path)):
        frames = []
        for entries in rec["frames"]:
            frame = []
            for e in entries:
                if "box" not in e:
                    raise ValidationError(f"{rec['video_id']}: frame entry without 'box'")
                frame.append(
                    FrameBox(
                        Box(*(float(v) for v in e["box"])),
                        float(e.get("actionness", e.get("score", 1.0))),
                        e.get("label"),
                        None if e.get("score") is None else float(e["score"]),
                    )
                )
            frames.append(frame)
        out.append((str(rec["video_id"]), frames))
    return sorted(out, key=lambda r: r[0])


def frame_detections_from(records: Iterable[tuple[str, list[list[FrameBox]]]]) -> list[FrameDetection]:
    out = []
    for vid, frames in records:
        for t, frame in enumerate(frames):
            for fb in frame:
                if fb.label is None:
                    raise ValidationError(f"{vid}: frame {t} detection without a label")
                score = fb.actionness if fb.score is None else fb.score
                out.append(FrameDetection(vid, t, fb.box, fb.label, score))
    return out


def frame_ground_truth_from(records: Iterable[tuple[str, list[list[FrameBox]]]]) -> list[FrameGroundTruth]:
    out = []
    for vid, frames in records:
        for t, frame in enumerate(frames):
            for fb in frame:
                if fb.label is None:
                    raise ValidationError(f"{vid}: frame {t} ground-truth box without a label")
                out.append(FrameGroundTruth(vid, t, fb.box, fb.label))
    return out
