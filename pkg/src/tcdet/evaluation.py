"""Detection / tracking mAP and tracklet stability errors.

Tracks on both sides are :class:`EvalTrack` objects: a label plus per-frame
boxes, and for predictions a per-frame confidence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Box, iou
from .simulator import UndefinedSpeedError, motion_speed_of

SPLITS = ("slow", "medium", "fast")


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    box_iou_threshold: float = 0.5
    temporal_thresholds: tuple[float, ...] = (0.25, 0.5, 0.75)
    num_classes: int | None = None

    def __post_init__(self) -> None:
        if not 0 < self.box_iou_threshold <= 1:
            raise ValueError("box_iou_threshold must lie in (0, 1]")
        if not self.temporal_thresholds or not all(0 < t <= 1 for t in self.temporal_thresholds):
            raise ValueError("temporal thresholds must lie in (0, 1]")


@dataclass
class EvalTrack:
    track_id: int
    label: int
    boxes: dict[int, Box]
    scores: dict[int, float] = field(default_factory=dict)

    @property
    def confidence(self) -> float:
        """Mean per-frame confidence."""
        if not self.scores:
            return 1.0
        return float(np.mean([self.scores[f] for f in sorted(self.scores)]))


@dataclass
class StabilityReport:
    fragment_error: float
    center_error: float
    aspect_error: float
    splits: dict[str, "StabilityReport | None"] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {
            "fragment_error": self.fragment_error,
            "center_error": self.center_error,
            "aspect_error": self.aspect_error,
        }
        for name, rep in self.splits.items():
            for key in ("fragment_error", "center_error", "aspect_error"):
                out[f"{key}_{name}"] = None if rep is None else getattr(rep, key)
        return out


def average_precision(is_tp: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP of a score-ranked hit list."""
    if num_gt <= 0:
        raise UndefinedMetricError("AP needs at least one ground-truth instance")
    hits = np.asarray(is_tp, dtype=bool)
    if hits.size == 0:
        return 0.0
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


# -- detection mAP ------------------------------------------------------------

Prediction = tuple[Box, int, float]
GroundTruth = tuple[Box, int]


def map_det(preds: Mapping[int, Sequence[Prediction]], gts: Mapping[int, Sequence[GroundTruth]],
            config: EvalConfig | None = None) -> tuple[dict[int, float], float]:
    """Per-class AP and their mean over classes that have ground truth."""
    config = config or EvalConfig()
    num_gt: dict[int, int] = {}
    for objs in gts.values():
        for _, label in objs:
            num_gt[label] = num_gt.get(label, 0) + 1
    if not num_gt:
        raise UndefinedMetricError("no ground truth")

    per_class: dict[int, float] = {}
    for label in sorted(num_gt):
        ranked = []
        for frame in sorted(preds):
            for k, (box, lab, score) in enumerate(preds[frame]):
                if lab == label:
                    ranked.append((-score, frame, k, box))
        ranked.sort(key=lambda r: (r[0], r[1], r[2]))
        used: dict[int, set[int]] = {}
        hits = []
        for _, frame, _, box in ranked:
            cands = [(g, gb) for g, (gb, gl) in enumerate(gts.get(frame, ())) if gl == label]
            best, best_iou = -1, config.box_iou_threshold
            taken = used.setdefault(frame, set())
            for g, gb in cands:
                if g in taken:
                    continue
                o = iou(box, gb)
                if o >= best_iou and (best < 0 or o > best_iou):
                    best, best_iou = g, o
            if best >= 0:
                taken.add(best)
            hits.append(best >= 0)
        per_class[label] = average_precision(hits, num_gt[label])
    return per_class, float(np.mean(list(per_class.values())))


# -- tracking mAP -------------------------------------------------------------

def temporal_iou(pred: EvalTrack, gt: EvalTrack, box_iou_threshold: float = 0.5) -> float:
    """Matched frames over the union of frames in which either track has a box."""
    union = set(pred.boxes) | set(gt.boxes)
    if not union:
        return 0.0
    matched = sum(1 for f in set(pred.boxes) & set(gt.boxes)
                  if iou(pred.boxes[f], gt.boxes[f]) >= box_iou_threshold)
    return matched / len(union)


def temporal_iou_matrix(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack], box_iou_threshold: float,
                        same_class: bool = True) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    for j, g in enumerate(gts):
        gframes = set(g.boxes)
        for i, p in enumerate(preds):
            if same_class and p.label != g.label:
                continue
            if gframes.isdisjoint(p.boxes):
                continue
            out[i, j] = temporal_iou(p, g, box_iou_threshold)
    return out


def _track_ap(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack], tiou: np.ndarray, label: int, tau: float,
              counted: Sequence[bool]) -> float:
    """AP for one class at one temporal threshold; GT with ``counted`` False are ignored."""
    gt_idx = [j for j, g in enumerate(gts) if g.label == label]
    num_gt = sum(1 for j in gt_idx if counted[j])
    order = sorted((i for i, p in enumerate(preds) if p.label == label),
                   key=lambda i: (-preds[i].confidence, preds[i].track_id))
    taken: set[int] = set()
    hits = []
    for i in order:
        best, best_val = -1, -1.0
        for j in gt_idx:
            if j not in taken and tiou[i, j] >= tau and tiou[i, j] > best_val:
                best, best_val = j, tiou[i, j]
        if best >= 0:
            taken.add(best)
            if not counted[best]:
                continue
            hits.append(True)
        else:
            hits.append(False)
    return average_precision(hits, num_gt)


def map_track(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack], config: EvalConfig | None = None,
              subset: Iterable[int] | None = None, tiou: np.ndarray | None = None) -> float:
    """Tracking mAP averaged over temporal thresholds and classes.

    ``subset`` restricts scoring to those GT positions; predictions matching
    other GT are then neither hits nor false alarms.
    """
    config = config or EvalConfig()
    if not gts:
        raise UndefinedMetricError("no ground truth")
    counted = [True] * len(gts) if subset is None else [False] * len(gts)
    if subset is not None:
        for j in subset:
            counted[j] = True
    labels = sorted({g.label for g, c in zip(gts, counted) if c})
    if not labels:
        raise UndefinedMetricError("no ground truth in subset")
    if tiou is None:
        tiou = temporal_iou_matrix(preds, gts, config.box_iou_threshold)
    per_tau = []
    for tau in config.temporal_thresholds:
        per_tau.append(np.mean([_track_ap(preds, gts, tiou, lab, tau, counted) for lab in labels]))
    return float(np.mean(per_tau))


def split_of(track: EvalTrack) -> str | None:
    try:
        return motion_speed_of(track.boxes)
    except UndefinedSpeedError:
        return None


# -- stability ----------------------------------------------------------------

def _std(values: list[float]) -> float:
    return float(np.std(values)) if values else 0.0


def pair_errors(pred: EvalTrack, gt: EvalTrack, box_iou_threshold: float) -> tuple[float, float, float]:
    """``(fragment, center, aspect)`` errors of one prediction against one GT track."""
    frames = sorted(gt.boxes)
    covered = [f in pred.boxes for f in frames]
    transitions = sum(1 for a, b in zip(covered, covered[1:]) if a != b)
    fragment = transitions / (len(frames) - 1) if len(frames) > 1 else 0.0

    ex, ey, er, es = [], [], [], []
    for f in frames:
        if f not in pred.boxes:
            continue
        p, g = pred.boxes[f], gt.boxes[f]
        if iou(p, g) < box_iou_threshold:
            continue
        (pcx, pcy), (gcx, gcy) = p.center, g.center
        ex.append((pcx - gcx) / g.width)
        ey.append((pcy - gcy) / g.height)
        er.append((p.width / p.height) / (g.width / g.height) - 1.0)
        es.append(np.sqrt(p.width * p.height / (g.width * g.height)) - 1.0)
    return fragment, _std(ex) + _std(ey), _std(er) + _std(es)


def _best_matches(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack], tiou: np.ndarray,
                  tau: float) -> dict[int, int]:
    """GT position -> prediction position of its best-match."""
    best: dict[int, int] = {}
    for i, p in enumerate(preds):
        if tiou.shape[1] == 0:
            break
        j = int(np.argmax(tiou[i]))
        if tiou[i, j] < tau:
            continue
        cur = best.get(j)
        if cur is None or (p.confidence, -p.track_id) > (preds[cur].confidence, -preds[cur].track_id):
            best[j] = i
    return best


def _stability_over(preds, gts, tiou, gt_subset, config) -> StabilityReport | None:
    if not gt_subset:
        return None
    frag_s, cen_s, asp_s = [], [], []
    for tau in config.temporal_thresholds:
        best = _best_matches(preds, gts, tiou, tau)
        frags, cens, asps = [], [], []
        for j in gt_subset:
            if j not in best:
                frags.append(1.0)
                continue
            fr, ce, asp = pair_errors(preds[best[j]], gts[j], config.box_iou_threshold)
            frags.append(fr)
            cens.append(ce)
            asps.append(asp)
        frag_s.append(np.mean(frags))
        if cens:
            cen_s.append(np.mean(cens))
            asp_s.append(np.mean(asps))
    return StabilityReport(
        float(np.mean(frag_s)),
        float(np.mean(cen_s)) if cen_s else 0.0,
        float(np.mean(asp_s)) if asp_s else 0.0,
    )


def stability(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack], config: EvalConfig | None = None,
              tiou: np.ndarray | None = None) -> StabilityReport:
    """Fragment / center / aspect errors of each GT track's best-match, with motion splits."""
    config = config or EvalConfig()
    if not gts:
        raise UndefinedMetricError("no ground truth")
    if tiou is None:
        tiou = temporal_iou_matrix(preds, gts, config.box_iou_threshold)
    report = _stability_over(preds, gts, tiou, list(range(len(gts))), config)
    assert report is not None
    split_idx: dict[str, list[int]] = {s: [] for s in SPLITS}
    for j, g in enumerate(gts):
        s = split_of(g)
        if s is not None:
            split_idx[s].append(j)
    report.splits = {s: _stability_over(preds, gts, tiou, split_idx[s], config) for s in SPLITS}
    return report


def detections_from_tracks(tracks: Iterable[EvalTrack]) -> dict[int, list[Prediction]]:
    out: dict[int, list[Prediction]] = {}
    for t in sorted(tracks, key=lambda t: t.track_id):
        for f in sorted(t.boxes):
            out.setdefault(f, []).append((t.boxes[f], t.label, t.scores.get(f, 1.0)))
    return out


def evaluate(preds: Sequence[EvalTrack], gts: Sequence[EvalTrack],
             config: EvalConfig | None = None) -> dict[str, float | None]:
    """Every metric in one flat report."""
    config = config or EvalConfig()
    if not gts:
        raise UndefinedMetricError("no ground truth")
    gt_frames: dict[int, list[GroundTruth]] = {}
    for g in sorted(gts, key=lambda t: t.track_id):
        for f in sorted(g.boxes):
            gt_frames.setdefault(f, []).append((g.boxes[f], g.label))
    _, mdet = map_det(detections_from_tracks(preds), gt_frames, config)
    tiou = temporal_iou_matrix(preds, gts, config.box_iou_threshold)
    report: dict[str, float | None] = {"map_det": mdet, "map_track": map_track(preds, gts, config, tiou=tiou)}
    splits: dict[str, list[int]] = {s: [] for s in SPLITS}
    for j, g in enumerate(gts):
        s = split_of(g)
        if s is not None:
            splits[s].append(j)
    for s in SPLITS:
        report[f"map_track_{s}"] = map_track(preds, gts, config, splits[s], tiou) if splits[s] else None
    report.update(stability(preds, gts, config, tiou).as_dict())
    return report
