"""Seeded synthetic corpora in the toolkit's file formats.

All randomness comes from a single numpy ``Generator(PCG64(seed))`` stream
consumed in a fixed order (video by video, then stream by stream), so a
config fully determines every output byte.

Layout written by :func:`write_corpus`::

    <dir>/ground_truth.json
    <dir>/class_scores.json          video-level class probabilities
    <dir>/captions.json              captioned segments for retrieval
    <dir>/synth_config.json
    <dir>/<stream>/curves/<video_id>.json
    <dir>/<stream>/features/<video_id>.fseq
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ActionnessCurveSet,
    Annotation,
    ClassPrediction,
    FeatureSequence,
    GroundTruthSet,
    TemporalSegment,
    ValidationError,
    VideoAnnotations,
    class_predictions_from_json,
    class_predictions_to_json,
    dump_json,
    ensure_dir,
    ground_truth_from_json,
    load_json,
    read_curves,
    read_feature_matrix,
    write_curves,
    write_feature_matrix,
)
from .retrieval import CaptionedSegment, corpus_from_json, corpus_to_json

VERBS = ["running", "jumping", "cooking", "swimming", "dancing", "climbing", "painting", "cycling"]
OBJECTS = ["track", "rope", "kitchen", "pool", "stage", "wall", "canvas", "road"]
FILLERS = ["quickly", "slowly", "outside", "together", "again", "happily"]


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 20
    duration_range: tuple[float, float] = (96.0, 192.0)
    gt_per_video: tuple[int, int] = (1, 3)
    gt_length_range: tuple[float, float] = (8.0, 40.0)
    fps: float = 1.0
    feature_dim: int = 16
    n_classes: int = 5
    curve_noise: float = 0.15
    feature_noise: float = 0.5
    signal: float = 0.8
    streams: tuple[str, ...] = ("rgb", "flow")
    # multiplies curve_noise per stream, same order as ``streams``
    stream_noise_scale: tuple[float, ...] = (1.0, 1.3)
    seed: int = 0

    def __post_init__(self):
        for name in ("duration_range", "gt_per_video", "gt_length_range", "streams", "stream_noise_scale"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_videos < 1 or self.n_classes < 1 or self.feature_dim < 1 or not self.streams:
            raise ValidationError("synth counts must be >= 1")
        if self.gt_per_video[0] < 1 or self.gt_per_video[1] < self.gt_per_video[0]:
            raise ValidationError("gt_per_video must be a range of counts >= 1")
        for name in ("duration_range", "gt_length_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValidationError(f"{name} must satisfy 0 < low < high")
        if self.curve_noise < 0 or self.feature_noise < 0:
            raise ValidationError("noise levels must be >= 0")
        if not self.fps > 0:
            raise ValidationError("fps must be positive")
        if len(self.stream_noise_scale) != len(self.streams):
            raise ValidationError("stream_noise_scale needs one entry per stream")

    @property
    def classes(self) -> list[str]:
        return [f"class_{k:02d}" for k in range(self.n_classes)]

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


@dataclass
class SynthCorpus:
    config: SynthConfig
    gt: GroundTruthSet
    curves: dict[str, dict[str, ActionnessCurveSet]]
    features: dict[str, dict[str, FeatureSequence]]
    classes: list[str]
    class_predictions: dict[str, ClassPrediction]
    captions: list[CaptionedSegment]
    gt_labels: dict[str, list[int]] = field(default_factory=dict)

    @property
    def video_ids(self) -> list[str]:
        return list(self.gt)

    @property
    def fps(self) -> float:
        return self.config.fps


def _place_segments(rng: np.random.Generator, T: int, lengths: np.ndarray) -> list[tuple[int, int]]:
    free = T - int(lengths.sum())
    if free < 0:
        raise ValidationError(f"{len(lengths)} segments totalling {int(lengths.sum())} frames do not fit {T} frames")
    cuts = np.sort(rng.integers(0, free + 1, size=len(lengths)))
    out, pos, prev = [], 0, 0
    for c, L in zip(cuts, lengths):
        pos += int(c - prev)
        prev = c
        out.append((pos, pos + int(L)))
        pos += int(L)
    return out


def _caption(rng: np.random.Generator, cls: int) -> str:
    verb = VERBS[cls % len(VERBS)]
    obj = OBJECTS[cls % len(OBJECTS)]
    filler = FILLERS[int(rng.integers(len(FILLERS)))]
    subject = ["a man", "a woman", "a person", "someone"][int(rng.integers(4))]
    if rng.random() < 0.5:
        return f"{subject} is {verb} on the {obj} {filler}"
    return f"{subject} {filler} starts {verb} near the {obj}"


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    D, K = cfg.feature_dim, cfg.n_classes
    action_dir = rng.standard_normal(D)
    action_dir /= np.linalg.norm(action_dir)
    class_dirs = rng.standard_normal((K, D))
    class_dirs /= np.linalg.norm(class_dirs, axis=1, keepdims=True)

    videos, gt_labels = {}, {}
    curves = {s: {} for s in cfg.streams}
    features = {s: {} for s in cfg.streams}
    preds, captions = {}, []
    for v in range(cfg.n_videos):
        vid = f"v_{v:04d}"
        T = int(round(rng.uniform(*cfg.duration_range) * cfg.fps))
        n_gt = int(rng.integers(cfg.gt_per_video[0], cfg.gt_per_video[1] + 1))
        lo, hi = (max(1, int(round(x * cfg.fps))) for x in cfg.gt_length_range)
        lengths = rng.integers(lo, hi + 1, size=n_gt)
        spans = _place_segments(rng, T, lengths)
        labels = [int(x) for x in rng.integers(0, K, size=n_gt)]
        anns = tuple(
            Annotation(TemporalSegment(a / cfg.fps, b / cfg.fps), cfg.classes[k]) for (a, b), k in zip(spans, labels)
        )
        videos[vid] = VideoAnnotations(T / cfg.fps, anns)
        gt_labels[vid] = labels

        indicator = np.zeros(T)
        signal = np.zeros((T, D))
        for (a, b), k in zip(spans, labels):
            indicator[a:b] = 1.0
            signal[a:b] = cfg.signal * (action_dir + class_dirs[k])
        blurred = np.convolve(indicator, np.ones(3) / 3, mode="same") * cfg.signal
        for stream, scale in zip(cfg.streams, cfg.stream_noise_scale):
            sigma = cfg.curve_noise * scale
            chans = [np.clip(blurred + sigma * rng.standard_normal(T), 0.0, 1.0) for _ in range(3)]
            curves[stream][vid] = ActionnessCurveSet(vid, cfg.fps, *chans)
            feats = signal + cfg.feature_noise * scale * rng.standard_normal((T, D))
            features[stream][vid] = FeatureSequence(feats.astype(np.float32))

        logits = 1.5 * rng.standard_normal(K)
        for k in set(labels):
            logits[k] += 3.0
        p = np.exp(logits - logits.max())
        preds[vid] = ClassPrediction(vid, p / p.sum())

        for j, ((a, b), k) in enumerate(zip(spans, labels)):
            emb = class_dirs[k] + 0.3 * rng.standard_normal(D)
            caps = tuple(_caption(rng, k) for _ in range(2))
            captions.append(CaptionedSegment.from_text(f"{vid}/{j}", emb, caps))

    return SynthCorpus(cfg, GroundTruthSet(videos), curves, features, cfg.classes, preds, captions, gt_labels)


@dataclass
class CaptionClusters:
    corpus: list[CaptionedSegment]
    cluster_of: dict[str, int]
    queries: np.ndarray
    query_clusters: list[int]
    # every caption vocabulary is tied to its cluster's verb and object
    cluster_captions: list[set[tuple[str, ...]]]


def caption_clusters(
    n_clusters: int = 5, per_cluster: int = 20, dim: int = 16, n_queries: int = 50, noise: float = 0.25, seed: int = 0
) -> CaptionClusters:
    """Segments grouped around random directions, each captioned from its cluster's templates."""
    if n_clusters < 1 or per_cluster < 1 or dim < 1 or n_queries < 1:
        raise ValidationError("caption cluster counts must be >= 1")
    if n_clusters > len(VERBS):
        raise ValidationError(f"at most {len(VERBS)} caption clusters")
    rng = np.random.Generator(np.random.PCG64(seed))
    centres = rng.standard_normal((n_clusters, dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    corpus, cluster_of = [], {}
    sets: list[set] = [set() for _ in range(n_clusters)]
    for c in range(n_clusters):
        for j in range(per_cluster):
            sid = f"c{c}_{j:03d}"
            emb = centres[c] + noise * rng.standard_normal(dim)
            seg = CaptionedSegment.from_text(sid, emb, [_caption(rng, c) for _ in range(2)])
            corpus.append(seg)
            cluster_of[sid] = c
            sets[c].update(seg.captions)
    qc = [int(x) for x in rng.integers(0, n_clusters, size=n_queries)]
    queries = centres[qc] + noise * rng.standard_normal((n_queries, dim))
    return CaptionClusters(corpus, cluster_of, queries, qc, sets)


def write_corpus(corpus: SynthCorpus, out_dir) -> None:
    out = ensure_dir(out_dir)
    dump_json(corpus.gt.to_json(), out / "ground_truth.json")
    dump_json(class_predictions_to_json(corpus.classes, corpus.class_predictions.values()), out / "class_scores.json")
    dump_json(corpus_to_json(corpus.captions), out / "captions.json")
    dump_json(corpus.config.to_json(), out / "synth_config.json")
    for stream in corpus.config.streams:
        cdir = ensure_dir(out / stream / "curves")
        fdir = ensure_dir(out / stream / "features")
        for vid in corpus.video_ids:
            write_curves(corpus.curves[stream][vid], cdir / f"{vid}.json")
            write_feature_matrix(corpus.features[stream][vid], fdir / f"{vid}.fseq")


def config_from_json(obj: dict) -> SynthConfig:
    known = {f.name for f in dataclasses.fields(SynthConfig)}
    extra = set(obj) - known
    if extra:
        raise ValidationError(f"unknown synth config key {sorted(extra)[0]!r}")
    return SynthConfig(**obj)


def load_corpus(directory) -> SynthCorpus:
    """Load a corpus directory; streams are the subdirectories holding ``curves/``."""
    d = Path(directory)
    gt = ground_truth_from_json(load_json(d / "ground_truth.json"))
    cfg_path = d / "synth_config.json"
    streams = sorted(p.name for p in d.iterdir() if (p / "curves").is_dir())
    if not streams:
        raise ValidationError(f"{d}: no stream directories with curves/")
    if cfg_path.exists():
        cfg = config_from_json(load_json(cfg_path))
    else:
        cfg = SynthConfig(n_videos=len(gt), streams=tuple(streams), stream_noise_scale=(1.0,) * len(streams))
    curves = {s: {} for s in streams}
    features = {s: {} for s in streams}
    for s in streams:
        for vid in gt:
            cpath = d / s / "curves" / f"{vid}.json"
            fpath = d / s / "features" / f"{vid}.fseq"
            if not cpath.exists() or not fpath.exists():
                raise ValidationError(f"missing curves or features for video {vid} in stream {s}")
            curves[s][vid] = read_curves(cpath)
            features[s][vid] = read_feature_matrix(fpath)
    classes, preds = [], {}
    if (d / "class_scores.json").exists():
        classes, preds = class_predictions_from_json(load_json(d / "class_scores.json"))
    captions = corpus_from_json(load_json(d / "captions.json")) if (d / "captions.json").exists() else []
    return SynthCorpus(cfg, gt, curves, features, classes, preds, captions)
