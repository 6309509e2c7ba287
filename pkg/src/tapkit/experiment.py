"""Corpus-level runs: train CAN and PRN on one split, evaluate every stage on the other.

Fusion weights are tuned on the evaluation split itself, the way the
challenge systems tuned them on their validation set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import can as can_mod
from . import prn as prn_mod
from .core import Proposal, TemporalSegment, ValidationError
from .cpn import TagConfig, coarse_proposals
from .evaluation import evaluate_proposals, tiou_matrix
from .pipeline import (
    PipelineConfig,
    StageModels,
    fuse_streams,
    refine_union,
    run_stage_pipeline,
    split_by_length,
    tune_fusion_weights,
)
from .synth import SynthCorpus


@dataclass(frozen=True)
class CanTrainConfig:
    steps: int = 600
    batch_size: int = 8
    seed: int = 0
    crop_margin: float = 0.25  # extra context around each long proposal, as a fraction of its length
    include_full_videos: bool = True


@dataclass(frozen=True)
class PrnTrainConfig:
    lr: float = 0.1
    epochs: int = 200
    seed: int = 0
    max_examples: int = 4000


@dataclass(frozen=True)
class ExperimentConfig:
    tag: TagConfig = field(default_factory=TagConfig)
    can: dict = field(default_factory=lambda: {"base_channels": 16})
    can_train: CanTrainConfig = field(default_factory=CanTrainConfig)
    prn_train: PrnTrainConfig = field(default_factory=PrnTrainConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    train_fraction: float = 0.5
    fusion_objective: str = "AUC"
    fusion_step: float = 0.05
    # videos the fusion weights are tuned on: "train" keeps the held-out split unseen
    fusion_split: str = "train"
    seed: int = 0

    def __post_init__(self):
        if self.fusion_split not in ("train", "eval"):
            raise ValidationError(f"fusion_split must be 'train' or 'eval', got {self.fusion_split!r}")


@dataclass
class ExperimentResult:
    train_ids: list[str]
    eval_ids: list[str]
    stage_proposals: dict[str, dict[str, list[Proposal]]]  # stream -> stage -> proposals
    fused: list[Proposal]
    fusion_weights: dict[str, float]
    auc: dict[tuple[str, str], float]  # (stream, stage) -> AUC
    models: dict[str, StageModels]
    seconds: float = 0.0

    def summary_rows(self) -> list[tuple[str, str, float]]:
        return [(s, st, v) for (s, st), v in self.auc.items()]


def split_ids(video_ids: list[str], train_fraction: float) -> tuple[list[str], list[str]]:
    """Deterministic interleaved split: video i goes to train when floor(i*f) advances."""
    ids = sorted(video_ids)
    train, held = [], []
    for i, vid in enumerate(ids):
        (train if int((i + 1) * train_fraction) > int(i * train_fraction) else held).append(vid)
    if not train or not held:
        raise ValidationError("train/eval split leaves one side empty")
    return train, held


def _clip_gt(gt_segments, a: float, b: float) -> tuple[TemporalSegment, ...]:
    out = []
    for g in gt_segments:
        s, e = max(g.start, a) - a, min(g.end, b) - a
        if e - s > 1e-6:
            out.append(TemporalSegment(max(0.0, s), e))
    return tuple(out)


def can_training_samples(corpus: SynthCorpus, stream: str, video_ids, coarse: dict, cfg: ExperimentConfig):
    samples = []
    for vid in video_ids:
        x = np.asarray(corpus.features[stream][vid].values, dtype=np.float64)
        fps = corpus.curves[stream][vid].fps
        duration = x.shape[0] / fps
        gt = corpus.gt[vid].segments
        if cfg.can_train.include_full_videos:
            samples.append(can_mod.TrainSample(x, tuple(gt), fps))
        long, _ = split_by_length(coarse[vid], duration, cfg.pipeline.split_fraction)
        for p in long:
            m = cfg.can_train.crop_margin * p.segment.length
            seg = TemporalSegment(max(0.0, p.segment.start - m), min(duration, p.segment.end + m))
            a, b = can_mod.crop_frames(seg, fps, x.shape[0])
            if b - a < 2:
                continue
            clipped = _clip_gt(gt, a / fps, b / fps)
            samples.append(can_mod.TrainSample(x[a:b], clipped, fps))
    return samples


def train_can(corpus: SynthCorpus, stream: str, video_ids, coarse: dict, cfg: ExperimentConfig) -> can_mod.CanNetwork:
    D = corpus.features[stream][video_ids[0]].D
    can_cfg = can_mod.config_from_json({**cfg.can, "input_dim": D})
    net = can_mod.CanNetwork.init(can_cfg, seed=cfg.can_train.seed)
    samples = can_training_samples(corpus, stream, video_ids, coarse, cfg)
    can_mod.fit(net, samples, cfg.can_train.steps, cfg.can_train.batch_size, seed=cfg.can_train.seed)
    return net


def train_prn_for_stream(corpus: SynthCorpus, stream: str, video_ids, net, cfg: ExperimentConfig) -> prn_mod.PrnModel:
    reps, labels = [], []
    for vid in video_ids:
        curves = corpus.curves[stream][vid]
        feats = corpus.features[stream][vid]
        # train on exactly what the PRN reranks at inference: the pre-NMS union
        coarse = coarse_proposals(curves, cfg.tag)
        union = refine_union(coarse, feats, curves.fps, curves.duration, net, cfg.pipeline) if net is not None else coarse
        gsegs = corpus.gt[vid].segments
        m = tiou_matrix([p.segment for p in union], gsegs).max(axis=1) if union else []
        for p, t in zip(union, m):
            reps.append(prn_mod.represent(p, feats, curves.fps))
            labels.append(t)
    reps, labels = np.array(reps), np.array(labels)
    if len(reps) > cfg.prn_train.max_examples:
        idx = np.sort(np.random.default_rng(cfg.prn_train.seed).choice(len(reps), cfg.prn_train.max_examples, replace=False))
        reps, labels = reps[idx], labels[idx]
    return prn_mod.train_prn(reps, labels, lr=cfg.prn_train.lr, epochs=cfg.prn_train.epochs, seed=cfg.prn_train.seed)


def run_experiment(corpus: SynthCorpus, cfg: ExperimentConfig = ExperimentConfig(), log=None) -> ExperimentResult:
    t0 = time.perf_counter()
    train_ids, eval_ids = split_ids(corpus.video_ids, cfg.train_fraction)
    eval_gt = corpus.gt.subset(eval_ids)
    streams = sorted(corpus.curves)
    stage_props: dict[str, dict[str, list[Proposal]]] = {}
    models: dict[str, StageModels] = {}
    auc: dict[tuple[str, str], float] = {}
    for stream in streams:
        coarse_train = {vid: coarse_proposals(corpus.curves[stream][vid], cfg.tag) for vid in train_ids}
        net = train_can(corpus, stream, train_ids, coarse_train, cfg)
        prn = train_prn_for_stream(corpus, stream, train_ids, net, cfg)
        models[stream] = StageModels(net, prn)
        per_stage: dict[str, list[Proposal]] = {}
        for vid in eval_ids:
            out = run_stage_pipeline(
                vid, corpus.curves[stream][vid], corpus.features[stream][vid], models[stream], cfg.pipeline, cfg.tag
            )
            for stage, props in out.items():
                per_stage.setdefault(stage, []).extend(props)
        stage_props[stream] = per_stage
        for stage, props in per_stage.items():
            auc[(stream, stage)] = evaluate_proposals(props, eval_gt).auc
            if log:
                log(f"{stream} {stage} AUC {auc[(stream, stage)]:.6f}")
    final_stage = "CPN+CAN+PRN"
    per_stream_final = {s: stage_props[s][final_stage] for s in streams}
    if cfg.pipeline.stream_weights is not None:
        weights = dict(cfg.pipeline.stream_weights)
    else:
        if cfg.fusion_split == "eval":
            tune_props, tune_gt = per_stream_final, eval_gt
        else:
            tune_props = {
                s: [
                    p
                    for vid in train_ids
                    for p in run_stage_pipeline(
                        vid, corpus.curves[s][vid], corpus.features[s][vid], models[s], cfg.pipeline, cfg.tag
                    )[final_stage]
                ]
                for s in streams
            }
            tune_gt = corpus.gt.subset(train_ids)
        weights, _ = tune_fusion_weights(tune_props, tune_gt, cfg.fusion_objective, cfg.fusion_step, cfg.pipeline)
    fused = fuse_streams(per_stream_final, weights, cfg.pipeline)
    auc[("fused", final_stage)] = evaluate_proposals(fused, eval_gt).auc
    if log:
        log(f"fused weights {weights} AUC {auc[('fused', final_stage)]:.6f}")
    return ExperimentResult(
        train_ids, eval_ids, stage_props, fused, weights, auc, models, time.perf_counter() - t0
    )
