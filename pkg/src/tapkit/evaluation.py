"""Temporal IoU, average recall vs. average number of proposals, and detection mAP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Detection, GroundTruthSet, Proposal, TemporalSegment, ValidationError

TIOU_THRESHOLDS = np.round(np.arange(0.5, 0.951, 0.05), 2)
AN_GRID = np.arange(1, 101)


def tiou(a: TemporalSegment, b: TemporalSegment) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


def tiou_matrix(segs_a: Sequence[TemporalSegment], segs_b: Sequence[TemporalSegment]) -> np.ndarray:
    """Pairwise tIoU, shape (len(a), len(b))."""
    if not segs_a or not segs_b:
        return np.zeros((len(segs_a), len(segs_b)))
    a = np.array([[s.start, s.end] for s in segs_a])
    b = np.array([[s.start, s.end] for s in segs_b])
    inter = np.minimum(a[:, None, 1], b[None, :, 1]) - np.maximum(a[:, None, 0], b[None, :, 0])
    inter = np.clip(inter, 0.0, None)
    # hull length equals union whenever the intersection is non-empty
    union = np.maximum(a[:, None, 1], b[None, :, 1]) - np.minimum(a[:, None, 0], b[None, :, 0])
    return np.where(inter > 0, inter / union, 0.0)


def ranked(proposals: Iterable[Proposal]) -> list[Proposal]:
    """Score descending; ties by earlier start, then shorter length."""
    return sorted(proposals, key=lambda p: (-p.score, p.segment.start, p.segment.length))


@dataclass(frozen=True)
class ArAnCurve:
    an_grid: np.ndarray
    ar_values: np.ndarray
    auc: float

    def to_csv(self) -> str:
        lines = ["an,ar"] + [f"{int(an)},{ar:.6f}" for an, ar in zip(self.an_grid, self.ar_values)]
        return "\n".join(lines) + "\n"


def evaluate_proposals(
    proposals: Iterable[Proposal],
    gt: GroundTruthSet,
    thresholds: np.ndarray = TIOU_THRESHOLDS,
    an_grid: np.ndarray = AN_GRID,
) -> ArAnCurve:
    if len(gt) == 0 or gt.n_annotations() == 0:
        raise ValidationError("ground truth is empty")
    by_video: dict[str, list[Proposal]] = {}
    for p in proposals:
        by_video.setdefault(p.video_id, []).append(p)

    max_an = int(np.max(an_grid))
    # recalled[k, t]: number of gt recalled at threshold t using the top-(k+1) proposals
    recalled = np.zeros((max_an, len(thresholds)))
    for vid in gt:
        gsegs = gt[vid].segments
        if not gsegs:
            continue
        props = ranked(by_video.get(vid, []))[:max_an]
        if not props:
            continue
        m = tiou_matrix([p.segment for p in props], gsegs)  # (n_props, n_gt)
        best_prefix = np.maximum.accumulate(m, axis=0)  # best tIoU per gt using top-(k+1)
        hits = (best_prefix[:, :, None] >= thresholds[None, None, :] - 1e-12).sum(axis=1)
        # beyond the proposal count, the budget adds nothing
        hits = np.vstack([hits, np.repeat(hits[-1:], max_an - hits.shape[0], axis=0)])
        recalled += hits
    recall = recalled / gt.n_annotations()
    ar = recall[np.asarray(an_grid, dtype=int) - 1].mean(axis=1)
    return ArAnCurve(np.asarray(an_grid), ar, float(ar.mean()))


def interpolated_ap(tp: np.ndarray, n_pos: int) -> float:
    """All-point interpolated AP from a score-ordered true-positive indicator."""
    if n_pos == 0:
        raise ValidationError("AP is undefined without positives")
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    rec = ctp / n_pos
    prec = ctp / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mpre = np.concatenate([[0.0], prec, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mpre[idx]))


def _detection_order(d: Detection):
    return (-d.score, d.video_id, d.segment.start, d.segment.end)


def average_precision(detections: Sequence[Detection], gt: GroundTruthSet, label: str, threshold: float) -> float:
    gts: dict[str, list[TemporalSegment]] = {
        vid: [a.segment for a in gt[vid].annotations if a.label == label] for vid in gt
    }
    n_pos = sum(len(v) for v in gts.values())
    dets = sorted((d for d in detections if d.label == label and d.video_id in gts), key=_detection_order)
    used = {vid: np.zeros(len(v), dtype=bool) for vid, v in gts.items()}
    tp = np.zeros(len(dets))
    for i, d in enumerate(dets):
        gsegs = gts[d.video_id]
        if not gsegs:
            continue
        ious = tiou_matrix([d.segment], gsegs)[0]
        for j in np.argsort(-ious, kind="stable"):
            if ious[j] < threshold - 1e-12:
                break
            if not used[d.video_id][j]:
                used[d.video_id][j] = True
                tp[i] = 1.0
                break
    return interpolated_ap(tp, n_pos)


@dataclass(frozen=True)
class DetectionResult:
    thresholds: np.ndarray
    mAP: np.ndarray
    average_mAP: float


def evaluate_detections(
    detections: Iterable[Detection], gt: GroundTruthSet, thresholds: np.ndarray = TIOU_THRESHOLDS
) -> DetectionResult:
    if len(gt) == 0 or gt.n_annotations() == 0:
        raise ValidationError("ground truth is empty")
    dets = list(detections)
    labels = gt.labels
    maps = np.array(
        [np.mean([average_precision(dets, gt, lab, float(t)) for lab in labels]) for t in thresholds]
    )
    return DetectionResult(np.asarray(thresholds), maps, float(maps.mean()))
