"""Frame-to-frame association as maximum-weight bipartite matching.

Left nodes are the active tracklets plus one pseudo tracklet per detection;
right nodes are the detections. A tracklet connects to a detection when its
last box overlaps it, with the embedding cosine as weight; the pseudo node of
detection ``i`` connects only to ``i`` with weight 0, so a detection whose
cosines are all negative ends up starting a new tracklet.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix

NEW = -1
_FORBIDDEN = -1e6


@dataclass(frozen=True)
class AssociationGraph:
    tracklet_ids: tuple[int, ...]
    num_detections: int
    # (tracklet position, detection index) -> cosine weight
    edges: dict[tuple[int, int], float]

    def tracklet_edges(self) -> set[tuple[int, int]]:
        """Real edges keyed by ``(tracklet id, detection index)``."""
        return {(self.tracklet_ids[j], i) for j, i in self.edges}


@dataclass(frozen=True)
class AssociationResult:
    # matches[i] is the tracklet id for detection i, or NEW
    matches: tuple[int, ...]
    weights: tuple[float, ...]

    def matched_pairs(self) -> list[tuple[int, int]]:
        return [(i, t) for i, t in enumerate(self.matches) if t != NEW]

    def new_detections(self) -> list[int]:
        return [i for i, t in enumerate(self.matches) if t == NEW]

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))


def build_graph(tracklet_ids: Sequence[int], tracklet_boxes: np.ndarray, tracklet_embs: np.ndarray,
                det_boxes: np.ndarray, det_embs: np.ndarray, edge_min_iou: float = 0.0) -> AssociationGraph:
    """Edge (j, i) exists iff IoU(last box of j, detection i) > ``edge_min_iou``."""
    tracklet_boxes = np.asarray(tracklet_boxes, dtype=np.float64).reshape(-1, 4)
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    n = det_boxes.shape[0]
    edges: dict[tuple[int, int], float] = {}
    if len(tracklet_ids) and n:
        overlap = iou_matrix(tracklet_boxes, det_boxes)
        cos = np.asarray(tracklet_embs) @ np.asarray(det_embs).T
        for j, i in zip(*np.nonzero(overlap > edge_min_iou)):
            edges[(int(j), int(i))] = float(cos[j, i])
    return AssociationGraph(tuple(int(t) for t in tracklet_ids), n, edges)


def solve(graph: AssociationGraph) -> AssociationResult:
    """Maximum-weight matching over real and pseudo tracklets.

    Negative edges are dropped up front: the pseudo edge at 0 always beats
    them. Rows are ordered by tracklet id so equal inputs give equal output.
    """
    n = graph.num_detections
    if n == 0:
        return AssociationResult((), ())
    order = sorted(range(len(graph.tracklet_ids)), key=lambda j: graph.tracklet_ids[j])
    row_of = {j: r for r, j in enumerate(order)}
    m = len(order)

    weight = np.full((m + n, n), _FORBIDDEN)
    weight[m + np.arange(n), np.arange(n)] = 0.0
    for (j, i), w in graph.edges.items():
        if w >= 0.0:
            weight[row_of[j], i] = w

    rows, cols = linear_sum_assignment(weight, maximize=True)
    matches = [NEW] * n
    weights = [0.0] * n
    for r, c in zip(rows, cols):
        w = weight[r, c]
        assert w > _FORBIDDEN / 2, "forbidden pair selected"
        if r < m:
            matches[c] = graph.tracklet_ids[order[r]]
            weights[c] = float(w)
    return AssociationResult(tuple(matches), tuple(weights))


def associate(tracklet_ids: Sequence[int], tracklet_boxes: np.ndarray, tracklet_embs: np.ndarray,
              det_boxes: np.ndarray, det_embs: np.ndarray, edge_min_iou: float = 0.0) -> AssociationResult:
    return solve(build_graph(tracklet_ids, tracklet_boxes, tracklet_embs, det_boxes, det_embs, edge_min_iou))
