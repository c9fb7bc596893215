from __future__ import annotations

import io
import json
import os
import subprocess
import sys

import pytest

from tcdet.cli import main
from tcdet.config import ConfigError, RunConfig
from tcdet.fileio import (
    StreamFormatError,
    StreamHeader,
    read_stream,
    read_tracks,
    write_stream,
    write_tracks,
)
from tcdet.scoring import FusionParams
from tcdet.simulator import generate, stress_scene


def _stream_text(frames, header=StreamHeader(30, 128, 640, 480)):
    buf = io.StringIO()
    write_stream(buf, header, frames)
    return buf.getvalue()


def test_stream_round_trip_is_exact():
    seq = generate(stress_scene(0, num_frames=15))
    header, frames = read_stream(io.StringIO(_stream_text(seq.frames)))
    assert header == StreamHeader(30, 128, 640.0, 480.0)
    assert len(frames) == len(seq.frames)
    for a, b in zip(seq.frames, frames):
        assert a.frame_index == b.frame_index
        assert len(a.candidates) == len(b.candidates)
        for x, y in zip(a.candidates, b.candidates):
            assert x.box == y.box and x.motion == y.motion
            assert x.scores.tobytes() == y.scores.tobytes()
            assert x.embedding.tobytes() == y.embedding.tobytes()
        assert a.ground_truth == b.ground_truth


def test_version_mismatch_is_an_error():
    lines = _stream_text([]).splitlines()
    hdr = json.loads(lines[0])
    hdr["version"] = 99
    with pytest.raises(StreamFormatError, match="version"):
        read_stream(io.StringIO(json.dumps(hdr) + "\n"))


def test_missing_header_and_bad_lengths():
    with pytest.raises(StreamFormatError):
        read_stream(io.StringIO(""))
    text = _stream_text([], StreamHeader(2, 2, 10, 10))
    bad = {"frame": 0, "candidates": [{"box": [0, 0, 1, 1], "scores": [0.5, 0.5], "embedding": [1, 0]}]}
    with pytest.raises(StreamFormatError, match="scores"):
        read_stream(io.StringIO(text + json.dumps(bad) + "\n"))


def test_frames_must_not_go_backwards():
    text = _stream_text([], StreamHeader(1, 2, 10, 10))
    text += json.dumps({"frame": 3, "candidates": []}) + "\n" + json.dumps({"frame": 1, "candidates": []}) + "\n"
    with pytest.raises(StreamFormatError):
        read_stream(io.StringIO(text))


def test_repeated_frame_lines_merge():
    text = _stream_text([], StreamHeader(1, 2, 10, 10))
    c = {"box": [0, 0, 1, 1], "scores": [0.5, 0.5], "embedding": [1, 0]}
    text += json.dumps({"frame": 0, "candidates": [c]}) + "\n" + json.dumps({"frame": 0, "candidates": [c]}) + "\n"
    _, frames = read_stream(io.StringIO(text))
    assert len(frames) == 1 and len(frames[0].candidates) == 2


def test_track_table_round_trip_and_uniqueness():
    buf = io.StringIO()
    rows = [(0, 1, 0.1, 0.2, 3.3, 4.4, 0.123456789012345, 5), (1, 1, 0.3, 0.2, 3.3, 4.4, 0.5, 5)]
    write_tracks(buf, rows)
    [t] = read_tracks(io.StringIO(buf.getvalue()))
    assert t.track_id == 1 and t.label == 5 and t.scores[0] == 0.123456789012345
    assert t.boxes[0].x1 == 0.1 and t.boxes[0].width == pytest.approx(3.3)
    with pytest.raises(StreamFormatError, match="duplicate"):
        write_tracks(buf2 := io.StringIO(), rows + rows[:1])
        read_tracks(io.StringIO(buf2.getvalue()))
    with pytest.raises(StreamFormatError):
        read_tracks(io.StringIO("0,1,0,0,0,4,0.5,1\n"))


def test_config_defaults_and_keys():
    cfg = RunConfig.from_text("")
    assert cfg.fusion() == FusionParams()
    cfg = RunConfig.from_text("alpha = 2  # heavier prior\nvelocity_range = [1, 2]\nseeds = [3, 4]\n")
    assert cfg.fusion().alpha == 2.0 and cfg.scene().velocity_range == (1, 2) and cfg.seeds() == [3, 4]
    for bad in ("nope = 1", "alpha 1", "alpha = -1", "sweep_alpha = []", "preset = \"odd\"", "seeds = 0",
                "alpha = 1\nalpha = 2"):
        with pytest.raises(ConfigError):
            RunConfig.from_text(bad)


def test_stress_preset_sets_output_floor():
    cfg = RunConfig.from_text('preset = "stress"')
    assert cfg.scene(4) == stress_scene(4)
    assert cfg.pipeline().min_output_score == 0.5


# -- command line -------------------------------------------------------------

@pytest.fixture
def cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_simulate_noiseless_candidates_equal_gt(cwd):
    assert main(["simulate", "--out", "s.jsonl"]) == 0
    _, frames = read_stream(open("s.jsonl"))
    for rec in frames:
        assert sorted(d.box.as_array().tolist() for d in rec.candidates) == \
            sorted(g.box.as_array().tolist() for g in rec.ground_truth)


def test_simulate_is_reproducible(cwd):
    cfg = _write(cwd / "c.cfg", 'preset = "stress"\nnum_frames = 20\n')
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", "a.jsonl"]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", "b.jsonl"]) == 0
    assert (cwd / "a.jsonl").read_bytes() == (cwd / "b.jsonl").read_bytes()


def test_simulate_bad_config_leaves_no_file(cwd, capsys):
    cfg = _write(cwd / "bad.cfg", "num_objects = 3\nbox_jiter = 2\n")
    assert main(["simulate", "--config", cfg, "--out", "s.jsonl"]) == 2
    assert "box_jiter" in capsys.readouterr().err
    assert sorted(os.listdir(cwd)) == ["bad.cfg"]
    _write(cwd / "bad.cfg", "dropout = 2\n")
    assert main(["simulate", "--config", cfg, "--out", "s.jsonl"]) == 2
    assert sorted(os.listdir(cwd)) == ["bad.cfg"]


@pytest.mark.parametrize("flags", [["--propagate"], ["--rescore"], ["--mode", "sequential", "--first-stage"],
                                   ["--mode", "bogus"]])
def test_track_rejects_flag_combinations(cwd, flags):
    main(["simulate", "--out", "s.jsonl"])
    argv = ["track", "s.jsonl", "--out", "t.csv"] + flags
    assert main(argv) == 2
    assert not (cwd / "t.csv").exists()


def test_track_missing_input_is_usage_error(cwd):
    assert main(["track", "nope.jsonl", "--out", "t.csv"]) == 2


def test_track_bad_stream_is_runtime_error(cwd, capsys):
    _write(cwd / "s.jsonl", json.dumps({"format": "tcdet-detections", "version": 2, "num_classes": 1,
                                        "embedding_dim": 2, "image_width": 1, "image_height": 1}) + "\n")
    assert main(["track", "s.jsonl", "--out", "t.csv"]) == 1
    assert "version" in capsys.readouterr().err
    assert not (cwd / "t.csv").exists()


def test_track_noiseless_recovers_gt_ids(cwd):
    # the clean scene whose objects never overlap above the NMS threshold
    cfg = _write(cwd / "c.cfg", "num_objects = 5\nvelocity_range = [0, 40]\nseed = 9\n")
    assert main(["simulate", "--config", cfg, "--out", "s.jsonl", "--gt-out", "gt.csv"]) == 0
    assert main(["track", "s.jsonl", "--out", "t.csv", "--boxes-out", "b.jsonl"]) == 0
    pred, gt = read_tracks(open("t.csv")), read_tracks(open("gt.csv"))
    assert len(pred) == len(gt)
    by_first = {(g.boxes[0].as_array().tobytes()): g for g in gt}
    for p in pred:
        g = by_first[p.boxes[min(p.boxes)].as_array().tobytes()]
        assert sorted(p.boxes) == sorted(g.boxes) and p.label == g.label
        for f in g.boxes:
            assert p.boxes[f].as_array() == pytest.approx(g.boxes[f].as_array(), abs=1e-9)
    lines = (cwd / "b.jsonl").read_text().splitlines()
    assert len(lines) == 100 and len(json.loads(lines[0])["boxes"]) == 5


@pytest.mark.parametrize("flags", [[], ["--mode", "sequential"], ["--mode", "sequential", "--propagate", "--rescore"],
                                   ["--first-stage"]])
def test_track_is_byte_identical_on_rerun(cwd, flags):
    cfg = _write(cwd / "c.cfg", 'preset = "stress"\nnum_frames = 30\n')
    main(["simulate", "--config", cfg, "--out", "s.jsonl"])
    main(["track", "s.jsonl", "--config", cfg, "--out", "a.csv"] + flags)
    main(["track", "s.jsonl", "--config", cfg, "--out", "b.csv"] + flags)
    assert (cwd / "a.csv").read_bytes() == (cwd / "b.csv").read_bytes()
    assert len((cwd / "a.csv").read_text().splitlines()) > 1


def test_eval_perfect_and_empty(cwd, capsys):
    main(["simulate", "--out", "s.jsonl", "--gt-out", "gt.csv"])
    capsys.readouterr()
    assert main(["eval", "gt.csv", "gt.csv"]) == 0
    rep = json.loads(capsys.readouterr().out)
    for k, v in rep.items():
        if v is None:
            continue
        assert v == (1.0 if k.startswith("map") else 0.0), k
    _write(cwd / "empty.csv", "frame,track_id,x,y,w,h,confidence,class\n")
    assert main(["eval", "empty.csv", "s.jsonl"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["map_det"] == 0.0 and rep["map_track"] == 0.0


def test_eval_hand_computed_fixture(cwd, capsys):
    _write(cwd / "gt.csv", "0,0,0,0,10,10,1,1\n1,0,0,0,10,10,1,1\n")
    _write(cwd / "pred.csv", "0,1,0,0,10,10,0.9,1\n0,2,100,100,10,10,0.8,1\n1,3,0,0,10,10,0.7,1\n")
    assert main(["eval", "pred.csv", "gt.csv", "--out", "r.json"]) == 0
    rep = json.loads((cwd / "r.json").read_text())
    assert abs(rep["map_det"] - 5 / 6) <= 1e-6
    assert capsys.readouterr().out == ""


def test_ablate_sweep_rows(cwd, capsys):
    cfg = _write(cwd / "a.cfg", 'preset = "stress"\nnum_frames = 20\nseeds = 2\nsweep_alpha = [0.5, 1, 2]\n')
    assert main(["ablate", "--config", cfg]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    header = rows[0].split(",")
    assert header[:4] == ["section", "setting", "map_det", "map_track"]
    assert {"map_track_slow", "map_track_medium", "map_track_fast", "fragment_error_fast"} <= set(header)
    body = [r.split(",")[:2] for r in rows[1:]]
    assert body[:5] == [["component", m] for m in ("baseline", "+propagate", "++rescore", "integrated-s2",
                                                   "integrated")]
    assert body[5:] == [["sweep_alpha", "0.5"], ["sweep_alpha", "1.0"], ["sweep_alpha", "2.0"]]


def test_ablate_empty_sweep_is_usage_error(cwd):
    cfg = _write(cwd / "a.cfg", "sweep_gamma = []\n")
    assert main(["ablate", "--config", cfg, "--out", "t.csv"]) == 2
    assert not (cwd / "t.csv").exists()


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
    assert "error" in capsys.readouterr().err


def test_log_level_from_environment(cwd):
    env = dict(os.environ, TCDET_LOG_LEVEL="INFO")
    proc = subprocess.run([sys.executable, "-m", "tcdet.cli", "simulate", "--out", "s.jsonl"],
                          capture_output=True, text=True, env=env, cwd=cwd)
    assert proc.returncode == 0 and "wrote 100 frames" in proc.stderr and proc.stdout == ""
    env["TCDET_LOG_LEVEL"] = "ERROR"
    proc = subprocess.run([sys.executable, "-m", "tcdet.cli", "simulate", "--out", "s.jsonl"],
                          capture_output=True, text=True, env=env, cwd=cwd)
    assert proc.stderr == ""
