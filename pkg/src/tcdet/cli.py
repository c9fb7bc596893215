"""Command-line entry point: ``simulate``, ``track``, ``eval`` and ``ablate``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
runtime failures. Diagnostics go to stderr; ``TCDET_LOG_LEVEL`` sets the log
level (default ``WARNING``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

from . import bench
from .config import SWEEP_PARAMS, ConfigError, RunConfig
from .evaluation import evaluate
from .fileio import (
    StreamHeader,
    atomic_output,
    ground_truth_tracks,
    load_stream,
    load_tracks,
    track_rows,
    write_output_boxes,
    write_stream,
    write_tracks,
)
from .pipeline import filter_output, run
from .simulator import generate

log = logging.getLogger("tcdet")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would print usage and exit 2 itself
        raise UsageError(message)


def _configure_logging() -> None:
    level = os.environ.get("TCDET_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _require_input(path: str) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"no such input file: {path}")


def _dump_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with atomic_output(out) as fh:
            fh.write(text)


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    scene = cfg.scene(args.seed)
    seq = generate(scene)
    header = StreamHeader(scene.num_classes, scene.embedding_dim, scene.image_width, scene.image_height)
    with atomic_output(args.out) as fh:
        write_stream(fh, header, seq.frames)
    if args.gt_out:
        rows = [(f, t.track_id, *t.boxes[f].as_xywh(), 1.0, t.label) for t in seq.tracks for f in sorted(t.boxes)]
        rows.sort(key=lambda r: (r[0], r[1]))
        with atomic_output(args.gt_out) as fh:
            write_tracks(fh, rows)
    log.info("wrote %d frames to %s", len(seq.frames), args.out)
    return EXIT_OK


def cmd_track(args) -> int:
    if args.mode == "integrated" and (args.propagate or args.rescore):
        raise UsageError("--propagate / --rescore only apply to --mode sequential")
    cfg = RunConfig.load(args.config)
    _require_input(args.input)
    header, frames = load_stream(args.input)
    pcfg = cfg.pipeline(header.num_classes, mode=args.mode, propagate_boxes=args.propagate,
                        rescore_boxes=args.rescore, first_stage=args.first_stage)
    result = filter_output(run(frames, pcfg), pcfg.min_output_score, pcfg.min_tracklet_length)
    with atomic_output(args.out) as fh:
        write_tracks(fh, track_rows(result))
    if args.boxes_out:
        with atomic_output(args.boxes_out) as fh:
            write_output_boxes(fh, result)
    log.info("%d tracklets over %d frames", len(result.tracklets), len(frames))
    return EXIT_OK


def _load_gt(path: str):
    _require_input(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.read(1)
    if first == "{":
        return ground_truth_tracks(load_stream(path)[1])
    return load_tracks(path)


def cmd_eval(args) -> int:
    cfg = RunConfig.load(args.config)
    _require_input(args.pred)
    preds = load_tracks(args.pred)
    gts = _load_gt(args.gt)
    _dump_json(evaluate(preds, gts, cfg.eval_config()), args.out)
    return EXIT_OK


ABLATE_COLUMNS = ("section", "setting")


def cmd_ablate(args) -> int:
    cfg = RunConfig.load(args.config)
    sweeps = cfg.sweeps()
    seeds = cfg.seeds()
    scenes = [cfg.scene(s) for s in seeds]
    base = cfg.pipeline(scenes[0].num_classes)
    ecfg = cfg.eval_config()
    rows: list[tuple[str, str, dict]] = []
    table = bench.compare(scenes, bench.METHODS, base, ecfg)
    for m in bench.METHODS:
        rows.append(("component", m, table[m]))
    for p in SWEEP_PARAMS:
        for v in sweeps.get(p, []):
            swept = replace(base, fusion=replace(base.fusion, **{p: v}))
            rows.append((f"sweep_{p}", repr(v), bench.compare(scenes, ("integrated",), swept, ecfg)["integrated"]))
    metrics = list(rows[0][2])
    out = sys.stdout if args.out is None else None
    if out is not None:
        _write_ablate(out, rows, metrics)
    else:
        with atomic_output(args.out) as fh:
            _write_ablate(fh, rows, metrics)
    return EXIT_OK


def _write_ablate(fh, rows, metrics) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(ABLATE_COLUMNS) + metrics)
    for section, setting, rep in rows:
        writer.writerow([section, setting] + ["" if rep[k] is None else f"{rep[k]:.6f}" for k in metrics])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcdet", description="Tracklet-conditioned detection on synthetic detection streams.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="write a seeded synthetic detection stream")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--seed", type=int, help="override the scene seed")
    p.add_argument("--out", required=True, help="detection stream (.jsonl) to write")
    p.add_argument("--gt-out", help="also write the ground truth as a track table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run a tracker over a detection stream")
    p.add_argument("input", help="detection stream (.jsonl)")
    p.add_argument("--mode", choices=("integrated", "sequential"), default="integrated")
    p.add_argument("--propagate", action="store_true", help="sequential only: propagate boxes before NMS")
    p.add_argument("--rescore", action="store_true", help="sequential only: rescore boxes by their tracklet")
    p.add_argument("--first-stage", action="store_true", help="integrated only: also rerank proposals")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--out", required=True, help="track table (.csv) to write")
    p.add_argument("--boxes-out", help="also write per-frame output boxes with class scores (.jsonl)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a track table against ground truth")
    p.add_argument("pred", help="predicted track table (.csv)")
    p.add_argument("gt", help="ground truth: track table or detection stream with gt fields")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="component table and hyper-parameter sweeps on seeded scenes")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--out", help="write the CSV table here instead of stdout")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "first_stage", False) and args.mode == "sequential":
            raise UsageError("--first-stage only applies to --mode integrated")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"tcdet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        log.debug("runtime failure", exc_info=True)
        print(f"tcdet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
