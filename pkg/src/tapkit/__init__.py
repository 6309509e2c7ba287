"""Temporal action proposals from precomputed actionness curves and features.

Coarse watershed grouping, anchor-network refinement of long proposals,
context reranking, stream fusion, and the matching evaluation metrics.
"""

from .core import (
    ActionnessCurveSet,
    Annotation,
    ClassPrediction,
    Detection,
    FeatureSequence,
    FormatError,
    GroundTruthSet,
    Proposal,
    Stage,
    TapError,
    TemporalSegment,
    TruncationError,
    ValidationError,
    VideoAnnotations,
)
from .evaluation import evaluate_detections, evaluate_proposals, tiou
from .nms import nms

__version__ = "0.1.0"
