"""Wicket-delivery segmentation from scoreboard OCR, plus ball-trajectory analytics."""

from .detections import BBoxNorm, Detection, EvalReport, evaluate, iou
from .raster import PreprocessParams, RasterImage, Roi, preprocess_scorecard
from .scoreparse import ScoreReading, ScoreTracker, WicketEvent, parse_score
from .segmenter import ClipSpec, FrameDirectory, VideoMeta, run_segmentation
from .trajectory import Heatmap, Trajectory, accumulate_heatmap, build_trajectory, weak_zones

__version__ = "0.1.0"

__all__ = [
    "BBoxNorm",
    "ClipSpec",
    "Detection",
    "EvalReport",
    "FrameDirectory",
    "Heatmap",
    "PreprocessParams",
    "RasterImage",
    "Roi",
    "ScoreReading",
    "ScoreTracker",
    "Trajectory",
    "VideoMeta",
    "WicketEvent",
    "accumulate_heatmap",
    "build_trajectory",
    "evaluate",
    "iou",
    "parse_score",
    "preprocess_scorecard",
    "run_segmentation",
    "weak_zones",
]
