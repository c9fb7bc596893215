"""Detection streams (JSON Lines) and track tables (CSV).

A detection stream starts with a header object naming the format, its version,
the number of foreground classes ``C``, the embedding size ``D`` and the image
size. Every following line is one frame::

    {"frame": 0, "candidates": [{"box": [...], "scores": [...], "embedding": [...],
                                 "motion": [...]}],
     "gt": [{"track_id": 0, "class": 3, "box": [...]}]}

Floats are written with ``repr`` precision so a write / read cycle returns the
same values bit for bit.

Track tables hold one row per output box: ``frame, track_id, x, y, w, h,
confidence, class`` with ``(x, y)`` the top-left corner.
"""
from __future__ import annotations

import contextlib
import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .evaluation import EvalTrack
from .geometry import Box
from .pipeline import TrackingResult
from .records import Detection, FrameRecord, GroundTruthObject

STREAM_FORMAT = "tcdet-detections"
STREAM_VERSION = 1
TRACK_COLUMNS = ("frame", "track_id", "x", "y", "w", "h", "confidence", "class")


class StreamFormatError(ValueError):
    """Malformed or incompatible detection stream."""


@dataclass(frozen=True)
class StreamHeader:
    num_classes: int
    embedding_dim: int
    image_width: float
    image_height: float
    version: int = STREAM_VERSION

    def to_json(self) -> dict:
        return {
            "format": STREAM_FORMAT,
            "version": self.version,
            "num_classes": self.num_classes,
            "embedding_dim": self.embedding_dim,
            "image_width": float(self.image_width),
            "image_height": float(self.image_height),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StreamHeader":
        if not isinstance(obj, dict) or obj.get("format") != STREAM_FORMAT:
            raise StreamFormatError("first line is not a detection-stream header")
        if obj.get("version") != STREAM_VERSION:
            raise StreamFormatError(
                f"unsupported stream version {obj.get('version')!r} (this reader handles {STREAM_VERSION})")
        try:
            header = cls(int(obj["num_classes"]), int(obj["embedding_dim"]),
                         float(obj["image_width"]), float(obj["image_height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise StreamFormatError(f"bad header: {exc}") from None
        if header.num_classes < 1 or header.embedding_dim < 1:
            raise StreamFormatError("header needs num_classes >= 1 and embedding_dim >= 1")
        return header


@contextlib.contextmanager
def atomic_output(path: str | os.PathLike) -> Iterator[IO[str]]:
    """Open a temporary sibling of ``path`` and move it into place only on success."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".part", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _floats(values: Iterable[float]) -> list[float]:
    return [float(v) for v in values]


def _box_list(b: Box) -> list[float]:
    return [float(b.x1), float(b.y1), float(b.x2), float(b.y2)]


def frame_to_json(record: FrameRecord) -> dict:
    cands = []
    for d in record.candidates:
        c: dict = {"box": _box_list(d.box), "scores": _floats(d.scores), "embedding": _floats(d.embedding)}
        if d.motion is not None:
            c["motion"] = _floats(d.motion)
        if d.objectness is not None:
            c["objectness"] = float(d.objectness)
        cands.append(c)
    obj: dict = {"frame": record.frame_index, "candidates": cands}
    if record.ground_truth is not None:
        obj["gt"] = [{"track_id": g.track_id, "class": g.label, "box": _box_list(g.box)}
                     for g in record.ground_truth]
    return obj


def _vector(values, size: int, what: str, line: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (size,):
        raise StreamFormatError(f"line {line}: {what} has length {arr.size}, expected {size}")
    return arr


def frame_from_json(obj: dict, header: StreamHeader, line: int = 0) -> FrameRecord:
    try:
        cands = []
        for c in obj.get("candidates", []):
            motion = c.get("motion")
            if motion is not None:
                motion = tuple(float(v) for v in _vector(motion, 4, "motion", line))
            objectness = c.get("objectness")
            cands.append(Detection(
                Box(*_vector(c["box"], 4, "box", line)),
                _vector(c["scores"], header.num_classes + 1, "scores", line),
                _vector(c["embedding"], header.embedding_dim, "embedding", line),
                motion,
                None if objectness is None else float(objectness),
            ))
        gts = None
        if "gt" in obj:
            gts = [GroundTruthObject(int(g["track_id"]), int(g["class"]), Box(*_vector(g["box"], 4, "box", line)))
                   for g in obj["gt"]]
        return FrameRecord(int(obj["frame"]), cands, gts)
    except StreamFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(f"line {line}: {exc}") from None


def write_stream(fh: IO[str], header: StreamHeader, frames: Iterable[FrameRecord]) -> None:
    fh.write(json.dumps(header.to_json(), sort_keys=True) + "\n")
    for record in frames:
        fh.write(json.dumps(frame_to_json(record), separators=(",", ":")) + "\n")


def save_stream(path: str | os.PathLike, header: StreamHeader, frames: Iterable[FrameRecord]) -> None:
    with atomic_output(path) as fh:
        write_stream(fh, header, frames)


def read_stream(fh: IO[str]) -> tuple[StreamHeader, list[FrameRecord]]:
    """Parse a whole stream; lines for a repeated frame index are merged."""
    header: StreamHeader | None = None
    frames: list[FrameRecord] = []
    for lineno, raw in enumerate(fh, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"line {lineno}: {exc.msg}") from None
        if header is None:
            header = StreamHeader.from_json(obj)
            continue
        rec = frame_from_json(obj, header, lineno)
        if frames and rec.frame_index < frames[-1].frame_index:
            raise StreamFormatError(f"line {lineno}: frame {rec.frame_index} after {frames[-1].frame_index}")
        if frames and rec.frame_index == frames[-1].frame_index:
            prev = frames[-1]
            gts = None
            if prev.ground_truth is not None or rec.ground_truth is not None:
                gts = (prev.ground_truth or []) + (rec.ground_truth or [])
            frames[-1] = FrameRecord(prev.frame_index, prev.candidates + rec.candidates, gts)
        else:
            frames.append(rec)
    if header is None:
        raise StreamFormatError("empty stream: missing header line")
    return header, frames


def load_stream(path: str | os.PathLike) -> tuple[StreamHeader, list[FrameRecord]]:
    with open(path, encoding="utf-8") as fh:
        return read_stream(fh)


def ground_truth_tracks(frames: Iterable[FrameRecord]) -> list[EvalTrack]:
    tracks: dict[int, EvalTrack] = {}
    for rec in frames:
        for g in rec.ground_truth or []:
            tr = tracks.setdefault(g.track_id, EvalTrack(g.track_id, g.label, {}))
            if tr.label != g.label:
                raise StreamFormatError(f"ground-truth track {g.track_id} changes class")
            tr.boxes[rec.frame_index] = g.box
    return [tracks[k] for k in sorted(tracks)]


# -- track tables -----------------------------------------------------------

def track_rows(result: TrackingResult) -> list[tuple]:
    rows = []
    for ob, label in result.rows():
        b = ob.box
        rows.append((ob.frame, ob.track_id, b.x1, b.y1, b.width, b.height, ob.confidence, label))
    return rows


def write_tracks(fh: IO[str], rows: Iterable[tuple]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACK_COLUMNS)
    for frame, tid, x, y, w, h, conf, label in rows:
        writer.writerow([int(frame), int(tid), repr(float(x)), repr(float(y)), repr(float(w)),
                         repr(float(h)), repr(float(conf)), int(label)])


def read_tracks(fh: IO[str]) -> list[EvalTrack]:
    """Parse a track table; ``(frame, track_id)`` must be unique and a track keeps one class."""
    reader = csv.reader(fh)
    tracks: dict[int, EvalTrack] = {}
    for lineno, row in enumerate(reader, start=1):
        if not row or (lineno == 1 and row[0].strip() == "frame"):
            continue
        if len(row) != len(TRACK_COLUMNS):
            raise StreamFormatError(f"row {lineno}: expected {len(TRACK_COLUMNS)} columns, got {len(row)}")
        try:
            frame, tid, label = int(row[0]), int(row[1]), int(row[7])
            x, y, w, h, conf = (float(v) for v in row[2:7])
        except ValueError as exc:
            raise StreamFormatError(f"row {lineno}: {exc}") from None
        if not (w > 0 and h > 0):
            raise StreamFormatError(f"row {lineno}: width and height must be positive")
        tr = tracks.setdefault(tid, EvalTrack(tid, label, {}, {}))
        if tr.label != label:
            raise StreamFormatError(f"row {lineno}: track {tid} changes class")
        if frame in tr.boxes:
            raise StreamFormatError(f"row {lineno}: duplicate (frame, track_id) = ({frame}, {tid})")
        tr.boxes[frame] = Box.from_xywh(x, y, w, h)
        tr.scores[frame] = conf
    return [tracks[k] for k in sorted(tracks)]


def load_tracks(path: str | os.PathLike) -> list[EvalTrack]:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_tracks(fh)


def write_output_boxes(fh: IO[str], result: TrackingResult) -> None:
    """Per-frame JSON Lines of every output box with its full class distribution."""
    for f in sorted(result.frames):
        boxes = [{"track_id": ob.track_id, "box": _box_list(ob.box), "scores": _floats(ob.scores)}
                 for ob in sorted(result.frames[f], key=lambda b: b.track_id)]
        fh.write(json.dumps({"frame": f, "boxes": boxes}, separators=(",", ":")) + "\n")
