"""Seeded synthetic scenes with ground truth.

Objects move with constant velocity plus acceleration noise and bounce off the
image border. Every visible object emits ``duplicates`` candidate boxes. Each
duplicate slot has its own persistent corner offset (mixed with fresh per-frame
jitter) so the slots behave like two proposals that both cover the object but
sit slightly differently on it. With probability ``degrade`` an object's
candidates in a frame get background-peaked scores (a blurred view) while the
boxes stay put; with probability ``dropout`` it emits no candidates.

Candidate embeddings are the object's identity vector moved along an
object-specific direction in proportion to the box's relative offset, which
makes a shifted box look a little different, plus isotropic noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .geometry import Box, iou
from .records import Detection, FrameRecord, GroundTruthObject


class UndefinedSpeedError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    num_objects: int = 5
    num_frames: int = 100
    image_width: float = 640.0
    image_height: float = 480.0
    num_classes: int = 30
    velocity_range: tuple[float, float] = (0.0, 15.0)
    heading_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    accel_noise: float = 0.0
    size_range: tuple[float, float] = (40.0, 120.0)
    aspect_range: tuple[float, float] = (0.5, 2.0)
    box_jitter: float = 0.0
    jitter_persistence: float = 0.75
    duplicates: int = 1
    embedding_dim: int = 128
    embedding_noise: float = 0.0
    appearance_gain: float = 20.0
    score_peak: float = 5.0
    score_confusion: float = 0.0
    distractor_rate: float = 0.0
    distractor_peak: float = 3.0
    motion_noise: float = 0.0
    dropout: float = 0.0
    degrade: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("num_objects", "num_frames", "duplicates", "seed"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.num_classes < 1 or self.embedding_dim < 2:
            raise ValueError("need num_classes >= 1 and embedding_dim >= 2")
        for name in ("accel_noise", "box_jitter", "embedding_noise", "appearance_gain", "score_confusion",
                     "distractor_rate", "motion_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("dropout", "degrade", "jitter_persistence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("velocity_range", "heading_range", "size_range", "aspect_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty")
        if self.size_range[0] <= 0 or self.aspect_range[0] <= 0 or self.velocity_range[0] < 0:
            raise ValueError("sizes and aspects must be positive, speeds non-negative")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class GTTrack:
    track_id: int
    label: int
    embedding: np.ndarray
    boxes: dict[int, Box] = field(default_factory=dict)


@dataclass
class SyntheticSequence:
    config: SceneConfig
    frames: list[FrameRecord]
    tracks: list[GTTrack]


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _identity_embeddings(rng: np.random.Generator, n: int, dim: int, max_cos: float = 0.5) -> np.ndarray:
    out: list[np.ndarray] = []
    while len(out) < n:
        v = _unit(rng, dim)
        if all(float(v @ u) < max_cos for u in out):
            out.append(v)
    return np.array(out).reshape(n, dim)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _reflect(pos: float, vel: float, limit: float) -> tuple[float, float]:
    if limit <= 0:
        return 0.0, 0.0
    # fold the coordinate back into [0, limit]
    period = 2.0 * limit
    p = pos % period
    if p > limit:
        p = period - p
    crossings = math.floor(pos / limit)
    if crossings % 2:
        vel = -vel
    return p, vel


def generate(config: SceneConfig) -> SyntheticSequence:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    C, D = cfg.num_classes, cfg.embedding_dim
    n = cfg.num_objects

    idents = _identity_embeddings(rng, n, D)
    labels = rng.integers(1, C + 1, size=n)
    scale = rng.uniform(*cfg.size_range, size=n)
    aspect = rng.uniform(*cfg.aspect_range, size=n)
    w = np.minimum(scale * np.sqrt(aspect), cfg.image_width * 0.9)
    h = np.minimum(scale / np.sqrt(aspect), cfg.image_height * 0.9)
    x = rng.uniform(0.0, cfg.image_width - w)
    y = rng.uniform(0.0, cfg.image_height - h)
    speed = rng.uniform(*cfg.velocity_range, size=n)
    heading = rng.uniform(*cfg.heading_range, size=n)
    vx, vy = speed * np.cos(heading), speed * np.sin(heading)
    # object-specific directions along which a box offset changes the appearance
    shift_dirs = rng.standard_normal((n, D, 4)) / math.sqrt(D)
    slot_offsets = rng.standard_normal((n, max(cfg.duplicates, 1), 4)) * cfg.box_jitter

    # ground-truth trajectories
    gt = np.zeros((cfg.num_frames, n, 4))
    for t in range(cfg.num_frames):
        gt[t] = np.stack([x, y, x + w, y + h], axis=1)
        if cfg.accel_noise > 0:
            vx = vx + rng.normal(0.0, cfg.accel_noise, size=n)
            vy = vy + rng.normal(0.0, cfg.accel_noise, size=n)
        nx, ny = x + vx, y + vy
        for k in range(n):
            nx[k], vx[k] = _reflect(nx[k], vx[k], cfg.image_width - w[k])
            ny[k], vy[k] = _reflect(ny[k], vy[k], cfg.image_height - h[k])
        x, y = nx, ny

    tracks = [GTTrack(k, int(labels[k]), idents[k].copy()) for k in range(n)]
    persist = math.sqrt(cfg.jitter_persistence)
    fresh = math.sqrt(1.0 - cfg.jitter_persistence)
    frames: list[FrameRecord] = []
    for t in range(cfg.num_frames):
        nxt = gt[t + 1] if t + 1 < cfg.num_frames else 2 * gt[t] - gt[max(t - 1, 0)]
        cands: list[Detection] = []
        gts: list[GroundTruthObject] = []
        for k in range(n):
            g = gt[t, k]
            gbox = Box(*g)
            tracks[k].boxes[t] = gbox
            gts.append(GroundTruthObject(k, int(labels[k]), gbox))
            if cfg.dropout > 0 and rng.random() < cfg.dropout:
                continue
            degraded = cfg.degrade > 0 and rng.random() < cfg.degrade
            gw, gh = g[2] - g[0], g[3] - g[1]
            disp = nxt[k] - g
            true_motion = np.array([0.5 * (disp[0] + disp[2]), 0.5 * (disp[1] + disp[3]),
                                    disp[2] - disp[0], disp[3] - disp[1]])
            for s in range(cfg.duplicates):
                off = persist * slot_offsets[k, s] + fresh * rng.normal(0.0, cfg.box_jitter, size=4)
                b = g + off
                b[2] = max(b[2], b[0] + 1e-3)
                b[3] = max(b[3], b[1] + 1e-3)
                rel = off / np.array([gw, gh, gw, gh])
                e = idents[k] + cfg.appearance_gain * (shift_dirs[k] @ rel)
                if cfg.embedding_noise > 0:
                    e = e + rng.normal(0.0, cfg.embedding_noise / math.sqrt(D), size=D)
                logits = rng.normal(0.0, cfg.score_confusion, size=C + 1) if cfg.score_confusion > 0 \
                    else np.zeros(C + 1)
                if degraded:
                    # blurred / defocused view: background dominates, true class survives as runner-up
                    logits[0] += cfg.score_peak
                    logits[labels[k]] += 0.5 * cfg.score_peak
                else:
                    logits[labels[k]] += cfg.score_peak
                motion = true_motion + (rng.normal(0.0, cfg.motion_noise, size=4) if cfg.motion_noise > 0 else 0.0)
                cands.append(Detection(Box(*b), _softmax(logits), e / np.linalg.norm(e),
                                       tuple(float(v) for v in motion)))
        n_distract = rng.poisson(cfg.distractor_rate) if cfg.distractor_rate > 0 else 0
        for _ in range(n_distract):
            s = rng.uniform(*cfg.size_range)
            a = rng.uniform(*cfg.aspect_range)
            dw = min(s * math.sqrt(a), cfg.image_width * 0.9)
            dh = min(s / math.sqrt(a), cfg.image_height * 0.9)
            dx = rng.uniform(0.0, cfg.image_width - dw)
            dy = rng.uniform(0.0, cfg.image_height - dh)
            logits = rng.normal(0.0, cfg.score_confusion, size=C + 1) if cfg.score_confusion > 0 \
                else np.zeros(C + 1)
            logits[0] += cfg.distractor_peak
            motion = rng.normal(0.0, cfg.motion_noise, size=4) if cfg.motion_noise > 0 else np.zeros(4)
            cands.append(Detection(Box(dx, dy, dx + dw, dy + dh), _softmax(logits), _unit(rng, D),
                                   tuple(float(v) for v in motion)))
        order = rng.permutation(len(cands))
        frames.append(FrameRecord(t, [cands[i] for i in order], gts))
    return SyntheticSequence(cfg, frames, tracks)


def stress_scene(seed: int, **overrides) -> SceneConfig:
    """The pinned jittered-duplicates scene used by the comparison benchmarks."""
    base = dict(
        num_objects=5, num_frames=100, box_jitter=2.0, duplicates=2, embedding_noise=0.2,
        distractor_rate=1.0, velocity_range=(0.0, 30.0), accel_noise=0.1, size_range=(40.0, 120.0),
        score_confusion=1.0, motion_noise=1.0, appearance_gain=16.0, degrade=0.1, seed=seed,
    )
    base.update(overrides)
    return SceneConfig(**base)


def consecutive_ious(boxes: list[Box]) -> list[float]:
    return [iou(a, b) for a, b in zip(boxes, boxes[1:])]


def motion_speed_of(boxes: list[Box] | dict[int, Box]) -> str:
    """``slow`` above 0.8 mean consecutive IoU, ``medium`` in [0.6, 0.8], else ``fast``."""
    if isinstance(boxes, dict):
        boxes = [boxes[f] for f in sorted(boxes)]
    if len(boxes) < 2:
        raise UndefinedSpeedError("motion speed needs at least two boxes")
    mean_iou = float(np.mean(consecutive_ious(boxes)))
    if mean_iou > 0.8:
        return "slow"
    if mean_iou >= 0.6:
        return "medium"
    return "fast"


def noiseless_scene() -> SceneConfig:
    """Clean scene whose objects never overlap above the default NMS IoU and that covers every motion split."""
    return SceneConfig(num_objects=5, velocity_range=(0.0, 40.0), seed=9)
