"""Per-video orchestration of the three proposal stages, stream fusion, and detection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import can as can_mod
from . import prn as prn_mod
from .core import (
    ActionnessCurveSet,
    ClassPrediction,
    Detection,
    FeatureSequence,
    GroundTruthSet,
    Proposal,
    Stage,
    ValidationError,
)
from .cpn import TagConfig, coarse_proposals
from .evaluation import evaluate_detections, evaluate_proposals, ranked, tiou, tiou_matrix
from .nms import nms

STAGE_KEYS = ("CPN", "CPN+CAN", "CPN+CAN+PRN")


@dataclass(frozen=True)
class PipelineConfig:
    split_fraction: float = 0.15
    nms_tiou: float = 0.8
    K_final: int = 100
    stream_weights: Mapping[str, float] | None = None
    duplicate_merge_tiou: float = 0.9
    classes_per_proposal: int = 2
    prn_blend: float = 0.0

    def __post_init__(self):
        for name in ("split_fraction", "nms_tiou", "duplicate_merge_tiou"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {v}")
        if self.K_final < 1 or self.classes_per_proposal < 1:
            raise ValidationError("K_final and classes_per_proposal must be >= 1")
        if not 0 <= self.prn_blend <= 1:
            raise ValidationError("prn_blend must lie in [0, 1]")
        if self.stream_weights is not None:
            check_weights(self.stream_weights, self.stream_weights.keys())


def check_weights(weights: Mapping[str, float], streams) -> None:
    if set(weights) != set(streams):
        raise ValidationError(f"weights cover {sorted(weights)} but streams are {sorted(streams)}")
    vals = np.array(list(weights.values()), dtype=float)
    if np.any(vals < 0) or abs(vals.sum() - 1.0) > 1e-9:
        raise ValidationError(f"weights must be a point of the simplex, got {dict(weights)}")


@dataclass
class StageModels:
    can: can_mod.CanNetwork | None = None
    prn: prn_mod.PrnModel | None = None


def split_by_length(proposals: Sequence[Proposal], duration: float, fraction: float):
    """(long, short): long proposals exceed ``fraction * duration``."""
    cutoff = fraction * duration
    long = [p for p in proposals if p.segment.length > cutoff]
    short = [p for p in proposals if p.segment.length <= cutoff]
    return long, short


def refine_union(
    coarse: Sequence[Proposal], features, fps: float, duration: float, net, cfg: PipelineConfig
) -> list[Proposal]:
    """Short coarse proposals pass through; long ones are replaced by their CAN refinements."""
    long, short = split_by_length(coarse, duration, cfg.split_fraction)
    return list(short) + [q for p in long for q in can_mod.refine(net, p, features, fps)]


def run_stage_pipeline(
    video_id: str,
    curves: ActionnessCurveSet | None,
    features: FeatureSequence | None,
    models: StageModels,
    cfg: PipelineConfig = PipelineConfig(),
    tag_cfg: TagConfig = TagConfig(),
) -> dict[str, list[Proposal]]:
    """CPN -> CAN on long proposals -> PRN over the union, NMS and top-K after each stage.

    The returned mapping keeps every cumulative stage for ablation; a stage
    whose model is missing is omitted.
    """
    if curves is None:
        raise ValidationError(f"missing actionness curves for video {video_id}")
    if features is None:
        raise ValidationError(f"missing features for video {video_id}")
    fps = curves.fps
    duration = curves.duration
    coarse = coarse_proposals(curves, tag_cfg)
    out = {"CPN": nms(coarse, cfg.nms_tiou)[: cfg.K_final]}
    union = coarse
    if models.can is not None:
        union = refine_union(coarse, features, fps, duration, models.can, cfg)
        out["CPN+CAN"] = nms(union, cfg.nms_tiou)[: cfg.K_final]
    if models.prn is not None:
        reranked = prn_mod.rerank(models.prn, union, features, fps, K=len(union), blend=cfg.prn_blend)
        out["CPN+CAN+PRN" if models.can is not None else "CPN+PRN"] = nms(reranked, cfg.nms_tiou)[: cfg.K_final]
    return out


def fuse_streams(
    per_stream: Mapping[str, Sequence[Proposal]],
    weights: Mapping[str, float],
    cfg: PipelineConfig = PipelineConfig(),
) -> list[Proposal]:
    """Weighted cross-stream score fusion, then NMS and top-K per video.

    Streams are visited by decreasing weight (ties by name) and each of their
    proposals, in rank order, joins the existing group it overlaps most at
    tIoU >= ``duplicate_merge_tiou`` that has no member from the same stream;
    otherwise it opens a new group. A group keeps the segment of its first
    member and scores ``sum_s w_s * score_s``. Zero-weight streams are skipped.
    """
    check_weights(weights, per_stream.keys())
    order = sorted((s for s in per_stream if weights[s] > 0), key=lambda s: (-weights[s], s))
    vids = sorted({p.video_id for s in per_stream for p in per_stream[s]})
    fused: list[Proposal] = []
    for vid in vids:
        groups: list[dict] = []
        for s in order:
            for p in ranked(q for q in per_stream[s] if q.video_id == vid):
                best, best_iou = None, -1.0
                for g in groups:
                    if s in g["members"]:
                        continue
                    o = tiou(p.segment, g["segment"])
                    if o >= cfg.duplicate_merge_tiou and o > best_iou:
                        best, best_iou = g, o
                if best is None:
                    groups.append({"segment": p.segment, "members": {s: p.score}})
                else:
                    best["members"][s] = p.score
        props = [
            Proposal(vid, g["segment"], float(np.clip(sum(weights[s] * v for s, v in g["members"].items()), 0, 1)), Stage.FUSED)
            for g in groups
        ]
        fused.extend(nms(props, cfg.nms_tiou)[: cfg.K_final])
    return fused


def simplex_grid(n: int, step: float) -> list[tuple[float, ...]]:
    """All weight vectors on the ``step`` lattice of the simplex, lexicographically ascending."""
    m = int(round(1.0 / step))
    if m < 1 or abs(m * step - 1.0) > 1e-9:
        raise ValidationError(f"grid step {step} must divide 1")
    pts = [c for c in itertools.product(range(m + 1), repeat=n) if sum(c) == m]
    return [tuple(x / m for x in c) for c in sorted(pts)]


def top1_tiou(proposals: Sequence[Proposal], gt: GroundTruthSet) -> float:
    """Mean over videos of the best gt tIoU reached by the video's top-ranked proposal."""
    vals = []
    for vid in gt:
        props = ranked(p for p in proposals if p.video_id == vid)
        segs = gt[vid].segments
        if props and segs:
            vals.append(float(tiou_matrix([props[0].segment], segs).max()))
        else:
            vals.append(0.0)
    return float(np.mean(vals))


def tune_fusion_weights(
    per_stream: Mapping[str, Sequence[Proposal]],
    gt: GroundTruthSet,
    objective: str = "AUC",
    step: float = 0.05,
    cfg: PipelineConfig = PipelineConfig(),
    class_predictions: Mapping[str, ClassPrediction] | None = None,
    classes: Sequence[str] | None = None,
) -> tuple[dict[str, float], float]:
    """Exhaustive simplex grid search; returns the best weights and their objective.

    Ties go to the lexicographically smallest weight vector (streams in name order).
    """
    if len(gt) == 0 or gt.n_annotations() == 0:
        raise ValidationError("ground truth is empty")
    streams = sorted(per_stream)
    if not streams:
        raise ValidationError("no streams to fuse")
    score_fn = _objective(objective, gt, cfg, class_predictions, classes)
    best_w, best_val = None, -np.inf
    for w in simplex_grid(len(streams), step):
        weights = dict(zip(streams, w))
        val = score_fn(fuse_streams(per_stream, weights, cfg))
        if val > best_val:
            best_w, best_val = weights, val
    return best_w, float(best_val)


def _objective(name, gt, cfg, class_predictions, classes) -> Callable[[list[Proposal]], float]:
    if name == "AUC":
        return lambda props: evaluate_proposals(props, gt).auc
    if name == "top1":
        return lambda props: top1_tiou(props, gt)
    if name == "avg_mAP":
        if class_predictions is None or classes is None:
            raise ValidationError("avg_mAP objective needs class predictions")
        return lambda props: evaluate_detections(
            detect_by_classification(props, class_predictions, classes, cfg.classes_per_proposal), gt
        ).average_mAP
    raise ValidationError(f"unknown objective {name!r}")


def detect_by_classification(
    proposals: Sequence[Proposal],
    class_predictions: Mapping[str, ClassPrediction],
    classes: Sequence[str],
    k: int = 2,
) -> list[Detection]:
    """Top-``k`` classes per proposal, scored ``proposal.score * p(class)``.

    A prediction keyed ``"<video_id>/<i>"`` (the proposal's position among its
    video's proposals) takes precedence over a video-level one keyed by id.
    """
    out = []
    position: dict[str, int] = {}
    for p in proposals:
        i = position.get(p.video_id, 0)
        position[p.video_id] = i + 1
        pred = class_predictions.get(f"{p.video_id}/{i}") or class_predictions.get(p.video_id)
        if pred is None:
            raise ValidationError(f"no class prediction for proposal {i} of video {p.video_id}")
        if pred.probs.shape[0] != len(classes):
            raise ValidationError(f"prediction {pred.id} has {pred.probs.shape[0]} classes, expected {len(classes)}")
        for c in np.argsort(-pred.probs, kind="stable")[:k]:
            out.append(Detection(p.video_id, p.segment, classes[c], float(p.score * pred.probs[c])))
    return out


def late_fuse_class_predictions(predictions: Mapping[str, ClassPrediction], weights: Mapping[str, float]) -> ClassPrediction:
    check_weights(weights, predictions.keys())
    dims = {p.probs.shape for p in predictions.values()}
    if len(dims) != 1:
        raise ValidationError(f"class vocabularies differ across streams: {sorted(dims)}")
    streams = sorted(predictions)
    probs = sum(weights[s] * predictions[s].probs for s in streams)
    return ClassPrediction(predictions[streams[0]].id, probs / probs.sum())


def top1_accuracy(predictions: Mapping[str, ClassPrediction], labels: Mapping[str, int]) -> float:
    hits = [int(np.argmax(predictions[k].probs)) == labels[k] for k in sorted(labels)]
    return float(np.mean(hits)) if hits else 0.0
