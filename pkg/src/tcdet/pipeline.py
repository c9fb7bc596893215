"""Online detection-and-tracking loops.

``sequential`` is the late-integration baseline: raw detector scores, optional
box propagation before NMS and optional box rescoring after association.
``integrated`` rescores every candidate against the tracklets of the previous
frame before NMS, and keeps tracklet class scores as a decayed running average.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .association import NEW, associate
from .geometry import Box, nms
from .records import Detection, FrameRecord, Motion, stack_candidates
from .scoring import (
    FusionParams,
    association_weight_matrix,
    conditioned_foreground,
    conditioned_score_matrix,
    foreground_probability,
    max_foreground,
)
from .tracklets import Tracklet, TrackletStore, age_and_retire, append

log = logging.getLogger(__name__)

MODES = ("integrated", "sequential")

MotionProvider = Callable[[Tracklet, int], "Motion | None"]


@dataclass(frozen=True)
class PipelineConfig:
    fusion: FusionParams = field(default_factory=FusionParams)
    mode: str = "integrated"
    propagate_boxes: bool = False
    rescore_boxes: bool = False
    max_inactive: int = 10
    min_output_score: float = 0.0
    min_tracklet_length: int = 1
    # None: half of min_output_score
    spawn_score: float | None = None
    first_stage: bool = False
    proposal_top_k: int = 300

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "integrated" and (self.propagate_boxes or self.rescore_boxes):
            raise ValueError("box propagation / rescoring only apply to the sequential mode")
        if self.mode == "sequential" and self.first_stage:
            raise ValueError("first-stage conditioning only applies to the integrated mode")
        if self.max_inactive < 0:
            raise ValueError("max_inactive must be >= 0")
        if not 0.0 <= self.min_output_score <= 1.0:
            raise ValueError("min_output_score must lie in [0, 1]")
        if self.min_tracklet_length < 1:
            raise ValueError("min_tracklet_length must be >= 1")
        if self.spawn_score is not None and not 0.0 <= self.spawn_score <= 1.0:
            raise ValueError("spawn_score must lie in [0, 1]")
        if self.proposal_top_k < 1:
            raise ValueError("proposal_top_k must be >= 1")

    @property
    def spawn_threshold(self) -> float:
        return self.min_output_score / 2.0 if self.spawn_score is None else self.spawn_score


@dataclass(frozen=True, eq=False)
class OutputBox:
    frame: int
    track_id: int
    box: Box
    scores: np.ndarray

    @property
    def confidence(self) -> float:
        return max_foreground(self.scores)


@dataclass
class TrackingResult:
    tracklets: list[Tracklet]
    frames: dict[int, list[OutputBox]]

    def tracklet(self, track_id: int) -> Tracklet:
        for t in self.tracklets:
            if t.id == track_id:
                return t
        raise KeyError(track_id)

    def rows(self) -> list[tuple[OutputBox, int]]:
        """``(box, tracklet label)`` pairs in frame, then track-id order."""
        labels = {t.id: t.label for t in self.tracklets}
        out = []
        for f in sorted(self.frames):
            for ob in sorted(self.frames[f], key=lambda b: b.track_id):
                out.append((ob, labels[ob.track_id]))
        return out


def default_motion(tracklet: Tracklet, frame: int) -> Motion:
    """Supplied motion of the last box, else constant velocity, else zero."""
    last = tracklet.entries[-1]
    steps = frame - last.frame
    if last.motion is not None:
        return tuple(steps * float(v) for v in last.motion)  # type: ignore[return-value]
    if tracklet.length >= 2:
        prev = tracklet.entries[-2]
        gap = last.frame - prev.frame
        (cx0, cy0), (cx1, cy1) = prev.box.center, last.box.center
        k = steps / gap
        return (k * (cx1 - cx0), k * (cy1 - cy0),
                k * (last.box.width - prev.box.width), k * (last.box.height - prev.box.height))
    return (0.0, 0.0, 0.0, 0.0)


def propagate_box(tracklets: Iterable[Tracklet], motion_provider: MotionProvider | None,
                  frame: int) -> list[tuple[int, Detection]]:
    """Carry each tracklet's last box into ``frame``; it inherits the tracklet's scores and embedding."""
    provider = motion_provider or default_motion
    out = []
    for t in tracklets:
        motion = provider(t, frame)
        if motion is None:
            motion = default_motion(t, frame)
        box = t.last_box.displaced(*motion)
        out.append((t.id, Detection(box, t.p_tr.copy(), t.embedding.copy())))
    return out


def rescore_box(tracklet: Tracklet) -> np.ndarray:
    """Unweighted mean of the scores of every box in ``tracklet``."""
    return np.mean([e.score for e in tracklet.entries], axis=0)


class OnlineTracker:
    """Frame-by-frame driver holding the tracklet store of one sequence."""

    def __init__(self, config: PipelineConfig, motion_provider: MotionProvider | None = None):
        self.config = config
        self.params = config.fusion
        self.motion_provider = motion_provider
        self.store = TrackletStore()
        self.frames: dict[int, list[OutputBox]] = {}
        self._last_frame: int | None = None

    def step(self, record: FrameRecord) -> list[OutputBox]:
        t = record.frame_index
        if self._last_frame is not None and t <= self._last_frame:
            raise ValueError(f"frame {t} arrived after frame {self._last_frame}")
        self._last_frame = t
        if self.config.mode == "integrated":
            out = self._step_integrated(record)
        else:
            out = self._step_sequential(record)
        self.frames[t] = out
        return out

    def result(self) -> TrackingResult:
        return TrackingResult(self.store.all_tracklets(), dict(self.frames))

    # -- integrated ---------------------------------------------------------

    def _step_integrated(self, record: FrameRecord) -> list[OutputBox]:
        p = self.params
        t = record.frame_index
        cands = list(record.candidates)
        dim = len(cands[0].embedding) if cands else 0
        active = self.store.active_list()
        tr_scores = np.array([a.p_tr for a in active]).reshape(len(active), p.num_classes + 1)
        tr_embs = np.array([a.embedding for a in active]).reshape(len(active), dim)

        if self.config.first_stage and active and cands:
            cands = self._rerank_proposals(cands, tr_scores, tr_embs)

        if not cands:
            age_and_retire(self.store, (), self.config.max_inactive)
            return []
        boxes, det_scores, det_embs = stack_candidates(cands, p.num_classes, dim)
        weights = association_weight_matrix(det_embs, tr_embs, p)
        cond = conditioned_score_matrix(det_scores, tr_scores, weights, p)
        keep = nms(boxes, max_foreground(cond), p.nms_iou)

        result = associate([a.id for a in active], _last_boxes(active), tr_embs,
                           boxes[keep], det_embs[keep], p.edge_min_iou)
        out: list[OutputBox] = []
        matched = []
        for k, tid in enumerate(result.matches):
            i = keep[k]
            det = cands[i]
            if tid != NEW:
                append(self.store.active[tid], t, det.box, cond[i], det_embs[i], p, motion=det.motion)
                matched.append(tid)
            elif foreground_probability(cond[i]) > self.config.spawn_threshold:
                tid = self.store.spawn(t, det.box, cond[i], det_embs[i], motion=det.motion).id
                matched.append(tid)
            else:
                continue
            out.append(OutputBox(t, tid, det.box, cond[i]))
        age_and_retire(self.store, matched, self.config.max_inactive)
        return out

    def _rerank_proposals(self, cands: list[Detection], tr_scores: np.ndarray,
                          tr_embs: np.ndarray) -> list[Detection]:
        p = self.params
        tr_fg = [foreground_probability(s) for s in tr_scores]
        embs = np.stack([c.embedding for c in cands])
        weights = association_weight_matrix(embs, tr_embs, p)
        fg = np.array([
            conditioned_foreground(
                c.objectness if c.objectness is not None else foreground_probability(c.scores),
                tr_fg, weights[i], p)
            for i, c in enumerate(cands)
        ])
        order = np.argsort(-fg, kind="stable")[: self.config.proposal_top_k]
        return [cands[i] for i in sorted(order)]

    # -- sequential ---------------------------------------------------------

    def _step_sequential(self, record: FrameRecord) -> list[OutputBox]:
        p = self.params
        cfg = self.config
        t = record.frame_index
        cands = list(record.candidates)
        source: list[int | None] = [None] * len(cands)
        active = self.store.active_list()

        if cfg.propagate_boxes:
            eligible = [a for a in active if a.last_active_frame == t - 1 and not a.entries[-1].propagated]
            for tid, det in propagate_box(eligible, self.motion_provider, t):
                cands.append(det)
                source.append(tid)
        if not cands:
            age_and_retire(self.store, (), cfg.max_inactive)
            return []

        dim = len(cands[0].embedding)
        boxes, det_scores, det_embs = stack_candidates(cands, p.num_classes, dim)
        tr_embs = np.array([a.embedding for a in active]).reshape(len(active), dim)
        keep = nms(boxes, max_foreground(det_scores), p.nms_iou)
        result = associate([a.id for a in active], _last_boxes(active), tr_embs,
                           boxes[keep], det_embs[keep], p.edge_min_iou)

        out: list[OutputBox] = []
        matched = []
        for k, tid in enumerate(result.matches):
            i = keep[k]
            det = cands[i]
            propagated = source[i] is not None
            if tid != NEW:
                tr = append(self.store.active[tid], t, det.box, det_scores[i], det_embs[i], p,
                            beta=1.0, propagated=propagated, motion=det.motion)
                matched.append(tid)
            elif not propagated and foreground_probability(det_scores[i]) > cfg.spawn_threshold:
                tr = self.store.spawn(t, det.box, det_scores[i], det_embs[i], motion=det.motion)
                tid = tr.id
                matched.append(tid)
            else:
                continue
            score = rescore_box(tr) if cfg.rescore_boxes else det_scores[i]
            out.append(OutputBox(t, tid, det.box, score))
        age_and_retire(self.store, matched, cfg.max_inactive)
        return out


def _last_boxes(tracklets: list[Tracklet]) -> np.ndarray:
    if not tracklets:
        return np.zeros((0, 4))
    return np.array([(b.x1, b.y1, b.x2, b.y2) for b in (t.last_box for t in tracklets)])


def run(frames: Iterable[FrameRecord], config: PipelineConfig,
        motion_provider: MotionProvider | None = None) -> TrackingResult:
    tracker = OnlineTracker(config, motion_provider)
    for record in frames:
        tracker.step(record)
    return tracker.result()


def run_integrated(frames: Iterable[FrameRecord], config: PipelineConfig | None = None) -> TrackingResult:
    config = config or PipelineConfig()
    if config.mode != "integrated":
        config = replace(config, mode="integrated")
    return run(frames, config)


def run_sequential(frames: Iterable[FrameRecord], config: PipelineConfig | None = None,
                   motion_provider: MotionProvider | None = None) -> TrackingResult:
    config = config or PipelineConfig(mode="sequential")
    if config.mode != "sequential":
        config = replace(config, mode="sequential")
    return run(frames, config, motion_provider)


def filter_output(result: TrackingResult, min_output_score: float = 0.0,
                  min_tracklet_length: int = 1) -> TrackingResult:
    """Drop low-confidence boxes and short tracklets; surviving boxes are untouched."""
    keep_ids = {t.id for t in result.tracklets if t.length >= min_tracklet_length}
    frames = {
        f: [b for b in boxes if b.track_id in keep_ids and b.confidence >= min_output_score]
        for f, boxes in result.frames.items()
    }
    present = {b.track_id for boxes in frames.values() for b in boxes}
    tracklets = [t for t in result.tracklets if t.id in present]
    return TrackingResult(tracklets, frames)
