"""Domain types and file I/O shared by every stage of the toolkit.

All times are in seconds. Actionness curves and feature sequences share one
time base per video, given by ``fps`` (samples per second), so sample ``t``
covers ``[t / fps, (t + 1) / fps)``.
"""

from __future__ import annotations

import enum
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class TapError(Exception):
    """Base class for data errors raised by the toolkit."""


class ValidationError(TapError, ValueError):
    pass


class SchemaError(ValidationError):
    pass


class FormatError(TapError):
    pass


class TruncationError(FormatError):
    pass


class Stage(str, enum.Enum):
    CPN = "CPN"
    CAN = "CAN"
    PRN = "PRN"
    FUSED = "FUSED"


@dataclass(frozen=True, order=True)
class TemporalSegment:
    start: float
    end: float

    def __post_init__(self):
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValidationError(f"non-finite segment [{self.start}, {self.end}]")
        if self.start < 0 or not self.start < self.end:
            raise ValidationError(f"invalid segment [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)

    def as_list(self) -> list[float]:
        return [self.start, self.end]


def _check_score(score: float, what: str = "score") -> float:
    if not (isinstance(score, (int, float)) and math.isfinite(score) and 0.0 <= score <= 1.0):
        raise ValidationError(f"{what} {score!r} outside [0, 1]")
    return float(score)


@dataclass(frozen=True)
class Proposal:
    video_id: str
    segment: TemporalSegment
    score: float
    stage: Stage = Stage.FUSED

    def __post_init__(self):
        object.__setattr__(self, "score", _check_score(self.score))
        object.__setattr__(self, "stage", Stage(self.stage))

    def with_score(self, score: float, stage: Stage | None = None) -> "Proposal":
        return Proposal(self.video_id, self.segment, score, self.stage if stage is None else stage)

    def check_duration(self, duration: float) -> None:
        if self.segment.end > duration + 1e-9:
            raise ValidationError(
                f"proposal {self.segment.as_list()} of {self.video_id} ends after duration {duration}"
            )


@dataclass(frozen=True)
class Detection:
    """A labelled proposal: the output of detection by classification."""

    video_id: str
    segment: TemporalSegment
    label: str
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", _check_score(self.score))


def _frozen_array(values, dtype=np.float64, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ActionnessCurveSet:
    video_id: str
    fps: float
    point: np.ndarray
    pair: np.ndarray
    recurrent: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValidationError(f"{self.video_id}: fps must be positive, got {self.fps}")
        lengths = set()
        for name in ("point", "pair", "recurrent"):
            arr = _frozen_array(getattr(self, name), ndim=1)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValidationError(f"{self.video_id}: {name} actionness outside [0, 1]")
            object.__setattr__(self, name, arr)
            lengths.add(arr.shape[0])
        if len(lengths) != 1:
            raise ValidationError(f"{self.video_id}: actionness channels differ in length {sorted(lengths)}")
        if lengths.pop() < 1:
            raise ValidationError(f"{self.video_id}: empty actionness curve")

    @property
    def T(self) -> int:
        return int(self.point.shape[0])

    @property
    def duration(self) -> float:
        return self.T / self.fps

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "fps": self.fps,
            "point": self.point.tolist(),
            "pair": self.pair.tolist(),
            "recurrent": self.recurrent.tolist(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ActionnessCurveSet":
        _require_keys(obj, ("video_id", "fps", "point", "pair", "recurrent"), "actionness curves")
        return cls(str(obj["video_id"]), float(obj["fps"]), obj["point"], obj["pair"], obj["recurrent"])


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A T x D feature matrix, one row per time step."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-d, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"feature matrix must have T >= 1 and D >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("feature matrix contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def T(self) -> int:
        return int(self.values.shape[0])

    @property
    def D(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class Annotation:
    segment: TemporalSegment
    label: str


@dataclass(frozen=True)
class VideoAnnotations:
    duration: float
    annotations: tuple[Annotation, ...]

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValidationError(f"duration must be positive, got {self.duration}")
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def segments(self) -> list[TemporalSegment]:
        return [a.segment for a in self.annotations]


class GroundTruthSet(Mapping[str, VideoAnnotations]):
    """Read-only mapping video id -> annotations, iterated in lexicographic order."""

    def __init__(self, videos: Mapping[str, VideoAnnotations]):
        self._videos = {}
        for vid in sorted(videos):
            va = videos[vid]
            for ann in va.annotations:
                if ann.segment.end > va.duration:
                    raise ValidationError(
                        f"video {vid}: annotation {ann.segment.as_list()} outside [0, {va.duration}]"
                    )
            self._videos[vid] = va

    def __getitem__(self, vid: str) -> VideoAnnotations:
        return self._videos[vid]

    def __iter__(self) -> Iterator[str]:
        return iter(self._videos)

    def __len__(self) -> int:
        return len(self._videos)

    @property
    def labels(self) -> list[str]:
        return sorted({a.label for va in self._videos.values() for a in va.annotations})

    def n_annotations(self) -> int:
        return sum(len(va.annotations) for va in self._videos.values())

    def subset(self, video_ids: Iterable[str]) -> "GroundTruthSet":
        return GroundTruthSet({vid: self._videos[vid] for vid in video_ids})

    def to_json(self) -> dict:
        return {
            "database": {
                vid: {
                    "duration": va.duration,
                    "annotations": [
                        {"segment": a.segment.as_list(), "label": a.label} for a in va.annotations
                    ],
                }
                for vid, va in self._videos.items()
            }
        }


@dataclass(frozen=True, eq=False)
class ClassPrediction:
    id: str
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen_array(self.probs, ndim=1)
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError(f"{self.id}: class probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValidationError(f"{self.id}: class probabilities sum to {p.sum()}, not 1")
        object.__setattr__(self, "probs", p)


# ---------------------------------------------------------------------------
# JSON helpers


def _require_keys(obj, keys: Sequence[str], what: str, optional: Sequence[str] = ()) -> None:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{what}: expected an object, got {type(obj).__name__}")
    for k in keys:
        if k not in obj:
            raise SchemaError(f"{what}: missing required key {k!r}")
    extra = set(obj) - set(keys) - set(optional)
    if extra:
        raise SchemaError(f"{what}: unexpected key {sorted(extra)[0]!r}")


def _segment(obj, what: str) -> TemporalSegment:
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise SchemaError(f"{what}: segment must be a 2-element list")
    try:
        return TemporalSegment(float(obj[0]), float(obj[1]))
    except ValidationError as exc:
        raise ValidationError(f"{what}: {exc}") from None


def load_json(path) -> object:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj, path, indent: int | None = None) -> None:
    """Write JSON deterministically (sorted keys, LF endings, trailing newline)."""
    text = json.dumps(obj, indent=indent, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def ground_truth_from_json(obj) -> GroundTruthSet:
    _require_keys(obj, ("database",), "ground truth")
    db = obj["database"]
    if not isinstance(db, Mapping):
        raise SchemaError("ground truth: 'database' must be an object")
    videos = {}
    for vid, entry in db.items():
        _require_keys(entry, ("duration", "annotations"), f"video {vid}", optional=("subset", "url", "resolution"))
        anns = []
        for ann in entry["annotations"]:
            _require_keys(ann, ("segment", "label"), f"video {vid} annotation")
            anns.append(Annotation(_segment(ann["segment"], f"video {vid}"), str(ann["label"])))
        try:
            videos[str(vid)] = VideoAnnotations(float(entry["duration"]), tuple(anns))
        except ValidationError as exc:
            raise ValidationError(f"video {vid}: {exc}") from None
    return GroundTruthSet(videos)


def parse_ground_truth(path) -> GroundTruthSet:
    return ground_truth_from_json(load_json(path))


def write_ground_truth(gt: GroundTruthSet, path) -> None:
    dump_json(gt.to_json(), path)


def _group_by_video(items) -> dict[str, list]:
    out: dict[str, list] = {}
    for it in items:
        out.setdefault(it.video_id, []).append(it)
    return {vid: out[vid] for vid in sorted(out)}


def proposals_to_json(proposals: Iterable[Proposal]) -> dict:
    return {
        "results": {
            vid: [{"segment": p.segment.as_list(), "score": p.score, "stage": p.stage.value} for p in ps]
            for vid, ps in _group_by_video(proposals).items()
        }
    }


def proposals_from_json(obj) -> list[Proposal]:
    _require_keys(obj, ("results",), "proposals", optional=("version", "external_data"))
    out = []
    for vid in sorted(obj["results"]):
        for entry in obj["results"][vid]:
            _require_keys(entry, ("segment", "score"), f"proposal of {vid}", optional=("label", "stage"))
            stage = Stage(entry.get("stage", Stage.FUSED.value))
            score = _check_score(entry["score"], f"proposal of {vid}: score")
            out.append(Proposal(str(vid), _segment(entry["segment"], f"proposal of {vid}"), score, stage))
    return out


def write_proposals(proposals: Iterable[Proposal], path) -> None:
    """Videos are written in id order; order within a video is preserved."""
    dump_json(proposals_to_json(proposals), path)


def read_proposals(path) -> list[Proposal]:
    return proposals_from_json(load_json(path))


def detections_to_json(detections: Iterable[Detection]) -> dict:
    return {
        "results": {
            vid: [{"segment": d.segment.as_list(), "score": d.score, "label": d.label} for d in ds]
            for vid, ds in _group_by_video(detections).items()
        }
    }


def write_detections(detections: Iterable[Detection], path) -> None:
    dump_json(detections_to_json(detections), path)


def read_detections(path) -> list[Detection]:
    obj = load_json(path)
    _require_keys(obj, ("results",), "detections", optional=("version", "external_data"))
    out = []
    for vid in sorted(obj["results"]):
        for entry in obj["results"][vid]:
            _require_keys(entry, ("segment", "score", "label"), f"detection of {vid}", optional=("stage",))
            score = _check_score(entry["score"], f"detection of {vid}: score")
            out.append(Detection(str(vid), _segment(entry["segment"], f"detection of {vid}"), str(entry["label"]), score))
    return out


def read_curves(path) -> ActionnessCurveSet:
    return ActionnessCurveSet.from_json(load_json(path))


def write_curves(curves: ActionnessCurveSet, path) -> None:
    dump_json(curves.to_json(), path)


def class_predictions_to_json(classes: Sequence[str], preds: Iterable[ClassPrediction]) -> dict:
    return {"classes": list(classes), "predictions": {p.id: p.probs.tolist() for p in preds}}


def class_predictions_from_json(obj) -> tuple[list[str], dict[str, ClassPrediction]]:
    _require_keys(obj, ("classes", "predictions"), "class scores")
    classes = [str(c) for c in obj["classes"]]
    preds = {}
    for key in sorted(obj["predictions"]):
        p = ClassPrediction(str(key), obj["predictions"][key])
        if p.probs.shape[0] != len(classes):
            raise ValidationError(f"{key}: {p.probs.shape[0]} probabilities for {len(classes)} classes")
        preds[str(key)] = p
    return classes, preds


# ---------------------------------------------------------------------------
# FSEQ binary feature files

FSEQ_MAGIC = b"FSEQ"
_FSEQ_HEADER = struct.Struct("<4sII")


def encode_feature_matrix(values) -> bytes:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-d, got shape {arr.shape}")
    T, D = arr.shape
    if T == 0 or D == 0:
        raise ValidationError(f"feature matrix must have T >= 1 and D >= 1, got {arr.shape}")
    return _FSEQ_HEADER.pack(FSEQ_MAGIC, T, D) + np.ascontiguousarray(arr).tobytes()


def decode_feature_matrix(data: bytes) -> FeatureSequence:
    if len(data) < _FSEQ_HEADER.size:
        raise TruncationError("FSEQ header truncated")
    magic, T, D = _FSEQ_HEADER.unpack_from(data)
    if magic != FSEQ_MAGIC:
        raise FormatError(f"bad FSEQ magic {magic!r}")
    if T == 0 or D == 0:
        raise ValidationError(f"FSEQ header has T={T}, D={D}")
    need = T * D * 4
    payload = data[_FSEQ_HEADER.size:]
    if len(payload) < need:
        raise TruncationError(f"FSEQ payload has {len(payload)} bytes, expected {need}")
    if len(payload) > need:
        raise FormatError(f"FSEQ payload has {len(payload) - need} trailing bytes")
    values = np.frombuffer(payload, dtype="<f4").reshape(T, D).astype(np.float32)
    return FeatureSequence(values)


def write_feature_matrix(values, path) -> None:
    if isinstance(values, FeatureSequence):
        values = values.values
    Path(path).write_bytes(encode_feature_matrix(values))


def read_feature_matrix(path) -> FeatureSequence:
    return decode_feature_matrix(Path(path).read_bytes())


def read_feature_dir(directory, video_ids: Iterable[str] | None = None) -> dict[str, FeatureSequence]:
    """Load ``<video_id>.fseq`` files from a directory."""
    directory = Path(directory)
    if video_ids is None:
        video_ids = sorted(p.stem for p in directory.glob("*.fseq"))
    out = {}
    for vid in sorted(video_ids):
        path = directory / f"{vid}.fseq"
        if not path.exists():
            raise ValidationError(f"missing features for video {vid} ({path})")
        out[vid] = read_feature_matrix(path)
    return out


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
