"""Tracklet-conditioned class scoring.

Class distributions are plain 1-D float arrays of length ``C + 1`` with the
background at index 0; embeddings are 1-D unit vectors. The helpers
:func:`class_distribution` and :func:`embedding` validate and build them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_FLOOR = 1e-12
DIST_ATOL = 1e-9


class DegenerateFusionError(ArithmeticError):
    """All fused class mass vanished; unreachable with the probability floor."""


@dataclass(frozen=True)
class FusionParams:
    """Scalar hyper-parameters of the conditioned detector.

    Defaults are the recommended operating point.
    """

    alpha: float = 1.0
    beta: float = 0.99
    gamma: float = 8.0
    eta: float = 0.8
    r_null: float = 0.3
    num_classes: int = 30
    nms_iou: float = 0.3
    edge_min_iou: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if int(self.num_classes) != self.num_classes or self.num_classes < 1:
            raise ValueError("num_classes must be a positive integer")
        if not 0 < self.nms_iou < 1:
            raise ValueError("nms_iou must lie in (0, 1)")
        if not 0 <= self.edge_min_iou < 1:
            raise ValueError("edge_min_iou must lie in [0, 1)")


def class_distribution(probs: Sequence[float] | np.ndarray, num_classes: int | None = None) -> np.ndarray:
    p = np.array(probs, dtype=np.float64).reshape(-1)
    if num_classes is not None and p.size != num_classes + 1:
        raise ValueError(f"expected {num_classes + 1} class probabilities, got {p.size}")
    if p.size < 2:
        raise ValueError("a class distribution needs background plus at least one class")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("class probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > DIST_ATOL:
        raise ValueError(f"class probabilities sum to {p.sum()!r}, not 1")
    return p


def uniform_distribution(num_classes: int) -> np.ndarray:
    return np.full(num_classes + 1, 1.0 / (num_classes + 1))


def embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``values`` scaled to unit length; the zero vector is rejected."""
    v = np.array(values, dtype=np.float64).reshape(-1)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("embedding must be a non-empty finite vector")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def association_weights(box_emb: np.ndarray, tracklet_embs: Sequence[np.ndarray] | np.ndarray,
                        params: FusionParams) -> np.ndarray:
    """Normalized weights over ``[null, tracklet_1, ..., tracklet_m]``.

    The null slot carries log-weight ``r_null``; tracklet ``j`` carries
    ``gamma * cos(box, tracklet_j)``.
    """
    box_emb = np.asarray(box_emb, dtype=np.float64)
    embs = np.asarray(tracklet_embs, dtype=np.float64)
    if embs.size == 0:
        embs = embs.reshape(0, box_emb.size)
    if embs.ndim != 2 or embs.shape[1] != box_emb.size:
        raise ValueError("embedding dimension mismatch")
    return association_weight_matrix(box_emb[None, :], embs, params)[0]


def association_weight_matrix(box_embs: np.ndarray, tracklet_embs: np.ndarray,
                              params: FusionParams) -> np.ndarray:
    """Batched :func:`association_weights`: ``(n, D) x (m, D) -> (n, m + 1)``."""
    box_embs = np.asarray(box_embs, dtype=np.float64)
    tracklet_embs = np.asarray(tracklet_embs, dtype=np.float64)
    if tracklet_embs.shape[0] and box_embs.shape[1] != tracklet_embs.shape[1]:
        raise ValueError("embedding dimension mismatch")
    n = box_embs.shape[0]
    logits = np.empty((n, tracklet_embs.shape[0] + 1))
    logits[:, 0] = params.r_null
    logits[:, 1:] = params.gamma * (box_embs @ tracklet_embs.T)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def fuse_scores(p_det: np.ndarray, p_tr: np.ndarray, alpha: float) -> np.ndarray:
    """Product-of-experts fusion ``p_det * p_tr**alpha``, renormalized.

    Both factors are floored at ``PROB_FLOOR`` so zero entries cannot wipe the
    whole distribution.
    """
    p_det = np.asarray(p_det, dtype=np.float64)
    p_tr = np.asarray(p_tr, dtype=np.float64)
    if p_det.shape[-1] != p_tr.shape[-1]:
        raise ValueError("distribution length mismatch")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    prod = np.maximum(p_det, PROB_FLOOR) * np.maximum(p_tr, PROB_FLOOR) ** alpha
    total = prod.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise DegenerateFusionError("fused class mass is zero")
    return prod / total


def conditioned_score(p_det: np.ndarray, tracklet_dists: Sequence[np.ndarray] | np.ndarray,
                      weights: Sequence[float] | np.ndarray, params: FusionParams) -> np.ndarray:
    """Mixture of per-tracklet fused scores; slot 0 is the null tracklet with a uniform prior."""
    p_det = np.asarray(p_det, dtype=np.float64)
    dists = np.asarray(tracklet_dists, dtype=np.float64).reshape(-1, p_det.size)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != dists.shape[0] + 1:
        raise ValueError(f"expected {dists.shape[0] + 1} weights, got {weights.size}")
    return conditioned_score_matrix(p_det[None, :], dists, weights[None, :], params)[0]


def conditioned_score_matrix(p_det: np.ndarray, p_tr: np.ndarray, weights: np.ndarray,
                             params: FusionParams) -> np.ndarray:
    """Batched :func:`conditioned_score`.

    ``p_det`` is ``(n, K)``, ``p_tr`` is ``(m, K)`` and ``weights`` is
    ``(n, m + 1)``; returns ``(n, K)``.
    """
    n, k = p_det.shape
    uniform = np.full((1, k), 1.0 / k)
    priors = np.concatenate([uniform, p_tr.reshape(-1, k)], axis=0)
    fused = fuse_scores(p_det[:, None, :], priors[None, :, :], params.alpha)
    out = np.einsum("nm,nmk->nk", weights, fused)
    # convex mixture of normalized rows; tidy rounding only
    return out / out.sum(axis=1, keepdims=True)


def foreground_probability(p_tr: np.ndarray) -> float:
    """Total foreground mass (every class except background)."""
    p_tr = np.asarray(p_tr, dtype=np.float64)
    return float(p_tr[1:].sum())


def max_foreground(scores: np.ndarray) -> np.ndarray | float:
    """Highest single foreground-class probability; used as the NMS / ranking score."""
    scores = np.asarray(scores, dtype=np.float64)
    out = scores[..., 1:].max(axis=-1)
    return float(out) if out.ndim == 0 else out


def conditioned_foreground(p_fg: float, tracklet_fg: Sequence[float], weights: Sequence[float],
                           params: FusionParams) -> float:
    """Two-class (background / foreground) version of the conditioned score.

    Used to rerank proposals: ``p_fg`` is the proposal objectness and
    ``tracklet_fg`` holds :func:`foreground_probability` of each tracklet.
    """
    det = np.array([1.0 - p_fg, p_fg])
    dists = [np.array([1.0 - f, f]) for f in tracklet_fg]
    single = FusionParams(alpha=params.alpha, num_classes=1)
    return float(conditioned_score(det, dists, weights, single)[1])


def tracking_loss(cos_sim: float, iou_with_gt: float) -> float:
    if iou_with_gt >= 0.5:
        return (1.0 - cos_sim) ** 2
    return max(0.0, cos_sim) ** 2


def tracking_loss_grad(cos_sim: float, iou_with_gt: float) -> float:
    """Derivative of :func:`tracking_loss` with respect to ``cos_sim``."""
    if iou_with_gt >= 0.5:
        return -2.0 * (1.0 - cos_sim)
    return 2.0 * max(0.0, cos_sim)
