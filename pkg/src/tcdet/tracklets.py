"""Tracklet state, the running-average class rescore and the embedding EMA."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geometry import Box
from .scoring import FusionParams


class DegenerateEmbeddingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrackletEntry:
    frame: int
    box: Box
    score: np.ndarray
    propagated: bool = False
    motion: tuple[float, float, float, float] | None = None


@dataclass
class Tracklet:
    id: int
    entries: list[TrackletEntry]
    p_tr: np.ndarray
    embedding: np.ndarray
    inactive_frames: int = 0

    @property
    def length(self) -> int:
        return len(self.entries)

    @property
    def last_active_frame(self) -> int:
        return self.entries[-1].frame

    @property
    def last_box(self) -> Box:
        return self.entries[-1].box

    @property
    def label(self) -> int:
        """Most likely foreground class (1-based)."""
        return int(np.argmax(self.p_tr[1:])) + 1

    def frames(self) -> list[int]:
        return [e.frame for e in self.entries]


def init_tracklet(track_id: int, frame: int, box: Box, score: np.ndarray, emb: np.ndarray,
                  *, propagated: bool = False,
                  motion: tuple[float, float, float, float] | None = None) -> Tracklet:
    score = np.array(score, dtype=np.float64)
    entry = TrackletEntry(frame, box, score, propagated, motion)
    return Tracklet(track_id, [entry], score.copy(), np.array(emb, dtype=np.float64))


def update_embedding(tracklet_emb: np.ndarray, box_emb: np.ndarray, eta: float) -> np.ndarray:
    """EMA toward the new box embedding, renormalized to unit length."""
    tracklet_emb = np.asarray(tracklet_emb, dtype=np.float64)
    box_emb = np.asarray(box_emb, dtype=np.float64)
    if tracklet_emb.shape != box_emb.shape:
        raise ValueError("embedding dimension mismatch")
    mixed = eta * box_emb + (1.0 - eta) * tracklet_emb
    norm = np.linalg.norm(mixed)
    if norm < 1e-12:
        raise DegenerateEmbeddingError("embedding update cancelled to zero")
    return mixed / norm


def rescore(p_tr_prev: np.ndarray, len_prev: int, fused_box: np.ndarray, beta: float) -> np.ndarray:
    """Running average of class scores with decay ``beta`` on the history."""
    if len_prev < 1:
        raise ValueError("len_prev must be >= 1")
    hist = beta * len_prev
    out = (np.asarray(fused_box, dtype=np.float64) + hist * np.asarray(p_tr_prev, dtype=np.float64)) / (1.0 + hist)
    total = out.sum()
    assert abs(total - 1.0) < 1e-9, total
    return out / total


def append(tracklet: Tracklet, frame: int, box: Box, fused_score: np.ndarray, box_emb: np.ndarray,
           params: FusionParams, *, beta: float | None = None, propagated: bool = False,
           motion: tuple[float, float, float, float] | None = None) -> Tracklet:
    """Extend ``tracklet`` in place with one associated box and return it.

    ``beta`` overrides ``params.beta`` (the sequential pipeline passes 1.0 to
    keep a plain mean of its boxes' scores).
    """
    if frame <= tracklet.last_active_frame:
        raise ValueError(f"frame {frame} does not follow {tracklet.last_active_frame}")
    fused_score = np.asarray(fused_score, dtype=np.float64)
    b = params.beta if beta is None else beta
    tracklet.p_tr = rescore(tracklet.p_tr, tracklet.length, fused_score, b)
    tracklet.embedding = update_embedding(tracklet.embedding, box_emb, params.eta)
    tracklet.entries.append(TrackletEntry(frame, box, fused_score.copy(), propagated, motion))
    tracklet.inactive_frames = 0
    return tracklet


@dataclass
class TrackletStore:
    active: dict[int, Tracklet] = field(default_factory=dict)
    terminated: list[Tracklet] = field(default_factory=list)
    next_id: int = 0

    def spawn(self, frame: int, box: Box, score: np.ndarray, emb: np.ndarray, **kw) -> Tracklet:
        t = init_tracklet(self.next_id, frame, box, score, emb, **kw)
        self.next_id += 1
        self.active[t.id] = t
        return t

    def active_list(self) -> list[Tracklet]:
        return [self.active[k] for k in sorted(self.active)]

    def all_tracklets(self) -> list[Tracklet]:
        return sorted([*self.terminated, *self.active.values()], key=lambda t: t.id)


def age_and_retire(store: TrackletStore, matched_ids: Iterable[int], max_inactive: int) -> TrackletStore:
    """Age unmatched active tracklets; retire those idle for more than ``max_inactive`` frames."""
    if max_inactive < 0:
        raise ValueError("max_inactive must be >= 0")
    matched = set(matched_ids)
    for tid in sorted(store.active):
        t = store.active[tid]
        if tid in matched:
            t.inactive_frames = 0
            continue
        t.inactive_frames += 1
        if t.inactive_frames > max_inactive:
            store.terminated.append(store.active.pop(tid))
    return store
