"""Per-frame input records shared by the simulator, pipelines and file I/O."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box

Motion = tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class Detection:
    """A candidate box with its class distribution and appearance embedding.

    ``motion`` is the estimated displacement ``(dx, dy, dw, dh)`` of the object
    under this box from the current frame to the next one (a stand-in for
    optical flow sampled at the box). ``objectness`` is an optional proposal
    score used by the first-stage rerank.
    """

    box: Box
    scores: np.ndarray
    embedding: np.ndarray
    motion: Motion | None = None
    objectness: float | None = None


@dataclass(frozen=True)
class GroundTruthObject:
    track_id: int
    label: int
    box: Box


@dataclass(eq=False)
class FrameRecord:
    frame_index: int
    candidates: list[Detection] = field(default_factory=list)
    ground_truth: list[GroundTruthObject] | None = None

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")


def stack_candidates(dets: list[Detection], num_classes: int, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not dets:
        return np.zeros((0, 4)), np.zeros((0, num_classes + 1)), np.zeros((0, dim))
    boxes = np.array([(d.box.x1, d.box.y1, d.box.x2, d.box.y2) for d in dets], dtype=np.float64)
    scores = np.stack([np.asarray(d.scores, dtype=np.float64) for d in dets])
    embs = np.stack([np.asarray(d.embedding, dtype=np.float64) for d in dets])
    return boxes, scores, embs
