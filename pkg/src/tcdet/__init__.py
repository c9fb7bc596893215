"""Tracklet-conditioned detection: online detection and tracking on candidate-box streams."""
from __future__ import annotations

from .association import NEW, associate
from .evaluation import EvalConfig, EvalTrack, evaluate, map_det, map_track, stability
from .geometry import Box, iou, nms
from .pipeline import PipelineConfig, TrackingResult, filter_output, run, run_integrated, run_sequential
from .records import Detection, FrameRecord, GroundTruthObject
from .scoring import FusionParams, association_weights, conditioned_score, fuse_scores
from .simulator import SceneConfig, generate, motion_speed_of, noiseless_scene, stress_scene
from .tracklets import Tracklet, TrackletStore

__version__ = "0.1.0"

__all__ = [
    "NEW", "Box", "Detection", "EvalConfig", "EvalTrack", "FrameRecord", "FusionParams", "GroundTruthObject",
    "PipelineConfig", "SceneConfig", "Tracklet", "TrackletStore", "TrackingResult", "associate",
    "association_weights", "conditioned_score", "evaluate", "filter_output", "fuse_scores", "generate", "iou",
    "map_det", "map_track", "motion_speed_of", "nms", "noiseless_scene", "run", "run_integrated",
    "run_sequential", "stability", "stress_scene",
]
