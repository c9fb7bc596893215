"""Method presets and seeded comparison runs on synthetic scenes."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .evaluation import EvalConfig, EvalTrack, evaluate
from .pipeline import PipelineConfig, TrackingResult, filter_output, run
from .scoring import FusionParams
from .simulator import SceneConfig, SyntheticSequence, generate

METHODS = ("baseline", "+propagate", "++rescore", "integrated-s2", "integrated")

# output score floor used with the stress scenes; degraded views fall below it
STRESS_MIN_OUTPUT_SCORE = 0.5


def stress_pipeline(**overrides) -> PipelineConfig:
    return PipelineConfig(**{"min_output_score": STRESS_MIN_OUTPUT_SCORE, **overrides})


def method_config(method: str, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    flags = dict(propagate_boxes=False, rescore_boxes=False, first_stage=False)
    if method == "baseline":
        return replace(base, mode="sequential", **flags)
    if method == "+propagate":
        return replace(base, mode="sequential", **{**flags, "propagate_boxes": True})
    if method == "++rescore":
        return replace(base, mode="sequential", **{**flags, "propagate_boxes": True, "rescore_boxes": True})
    if method == "integrated-s2":
        return replace(base, mode="integrated", **flags)
    if method == "integrated":
        return replace(base, mode="integrated", **{**flags, "first_stage": True})
    raise ValueError(f"unknown method {method!r}")


def result_tracks(result: TrackingResult) -> list[EvalTrack]:
    tracks: dict[int, EvalTrack] = {}
    labels = {t.id: t.label for t in result.tracklets}
    for f in sorted(result.frames):
        for ob in result.frames[f]:
            tr = tracks.setdefault(ob.track_id, EvalTrack(ob.track_id, labels[ob.track_id], {}, {}))
            tr.boxes[f] = ob.box
            tr.scores[f] = ob.confidence
    return [tracks[k] for k in sorted(tracks)]


def gt_tracks(seq: SyntheticSequence) -> list[EvalTrack]:
    return [EvalTrack(t.track_id, t.label, dict(t.boxes)) for t in seq.tracks]


def run_method(seq: SyntheticSequence, method: str, base: PipelineConfig | None = None) -> TrackingResult:
    cfg = method_config(method, base)
    result = run(seq.frames, cfg)
    return filter_output(result, cfg.min_output_score, cfg.min_tracklet_length)


def evaluate_method(seq: SyntheticSequence, method: str, base: PipelineConfig | None = None,
                    eval_config: EvalConfig | None = None) -> dict[str, float | None]:
    return evaluate(result_tracks(run_method(seq, method, base)), gt_tracks(seq), eval_config)


def compare(scenes: list[SceneConfig], methods=METHODS, base: PipelineConfig | None = None,
            eval_config: EvalConfig | None = None) -> dict[str, dict[str, float | None]]:
    """Mean metrics per method over the given scenes (``None`` where undefined for every scene)."""
    per: dict[str, list[dict[str, float | None]]] = {m: [] for m in methods}
    for sc in scenes:
        seq = generate(sc)
        if base is not None and base.fusion.num_classes != sc.num_classes:
            base = replace(base, fusion=replace(base.fusion, num_classes=sc.num_classes))
        b = base or PipelineConfig(fusion=FusionParams(num_classes=sc.num_classes))
        for m in methods:
            per[m].append(evaluate_method(seq, m, b, eval_config))
    return {m: mean_reports(rows) for m, rows in per.items()}


def mean_reports(rows: list[dict[str, float | None]]) -> dict[str, float | None]:
    keys = list(rows[0]) if rows else []
    out: dict[str, float | None] = {}
    for k in keys:
        vals = [r[k] for r in rows if r[k] is not None]
        out[k] = float(np.mean(vals)) if vals else None
    return out
