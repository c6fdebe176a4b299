import io
import json
import shutil
import subprocess
import sys

import pytest

from wicketlens.cli import run_cli
from wicketlens.detections import Detection, best_ball_per_frame, read_detection_dir, write_yolo_file
from wicketlens.fixtures import MatchScript, render_scoreboard_frame
from wicketlens.raster import read_image, write_image

SCRIPT = {
    "fps": 10,
    "duration_s": 12,
    "score_changes": [[0, 40, 1], [6.0, 40, 2]],
    "seed": 5,
    "deliveries": [
        {"frame_start": 40, "frame_end": 59, "from": [0.4, 0.05], "to": [0.6, 0.95], "decoys": True},
    ],
}


def cli(*argv):
    out = io.StringIO()
    code = run_cli([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def frames(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "script.json").write_text(json.dumps(SCRIPT))
    code, out = cli("gen-fixture", "--script", root / "script.json", "--out-dir", root / "frames")
    assert code == 0
    assert [e["wickets_after"] for e in json.loads(out)["events"]] == [2]
    return root / "frames"


def roi_args():
    r = MatchScript().style.roi
    return ["--roi", f"{r.x},{r.y},{r.w},{r.h}"]


def test_segment_one_wicket(frames, tmp_path):
    cfg = tmp_path / "cfg.json"
    r = MatchScript().style.roi
    cfg.write_text(json.dumps({"roi": {"x": r.x, "y": r.y, "w": r.w, "h": r.h}}))
    code, out = cli("segment", "--frames", frames, "--config", cfg, "--out", tmp_path / "manifest.json")
    assert code == 0
    clips = json.loads((tmp_path / "manifest.json").read_text())
    assert len(clips) == 1 and clips[0]["label"] == "wicket_1_2"
    assert (tmp_path / "score_log.jsonl").exists()
    assert out.strip() == str(tmp_path / "manifest.json")


def test_usage_errors(frames, tmp_path, capsys):
    assert cli("segment", "--frames", frames, "--bogus")[0] == 1
    assert "usage" in capsys.readouterr().err
    assert cli()[0] == 1
    assert cli("segment", "--frames", frames)[0] == 1  # nowhere to write
    assert cli("heatmap", "--trajectories", "x.csv", "--grid", "10by20")[0] == 1
    assert cli("preprocess", "--in", "a", "--out", "b", "--stages", "gray,blur")[0] == 1


def test_input_errors(frames, tmp_path, capsys):
    assert cli("segment", "--frames", tmp_path / "missing", "--out-dir", tmp_path)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"gama": 7}')
    assert cli("segment", "--frames", frames, "--config", bad, "--out-dir", tmp_path)[0] == 2
    assert "gama" in capsys.readouterr().err
    assert cli("segment", "--frames", frames, "--out-dir", tmp_path, "--roi", "600,0,100,100")[0] == 2


def test_external_tool_error(frames, tmp_path, monkeypatch):
    monkeypatch.setenv("WICKETLENS_OCR_CMD", "/nonexistent/ocr {input}")
    code, _ = cli("segment", "--frames", frames, "--out-dir", tmp_path, "--ocr-engine", "external", *roi_args())
    assert code == 3


def test_preprocess(tmp_path):
    img = render_scoreboard_frame((45, 2))
    write_image(img, tmp_path / "in.ppm")
    code, _ = cli("preprocess", "--in", tmp_path / "in.ppm", "--out", tmp_path / "out.pgm", *roi_args())
    assert code == 0
    out = read_image(tmp_path / "out.pgm")
    assert out.channels == 1 and (out.width, out.height) == (608, 152)
    code, _ = cli("preprocess", "--in", tmp_path / "in.ppm", "--out", tmp_path / "g.pgm", "--stages", "gray")
    assert code == 0
    assert read_image(tmp_path / "g.pgm").pixels.max() == 255


def test_evaluate_identical_dirs(frames, tmp_path):
    balls = read_detection_dir(frames / "detections" / "ball")
    gts = tmp_path / "gts"
    gts.mkdir()
    for stem, dets in balls.items():
        best = best_ball_per_frame(dets)
        keep = [] if best is None else [Detection(best.category, best.bbox, None)]
        write_yolo_file(keep, gts / f"{stem}.txt")
    code, out = cli("evaluate", "--preds", frames / "detections" / "ball", "--gts", gts)
    assert code == 0
    rep = json.loads(out)
    # decoys always rank below the real ball: AP stays perfect, precision does not
    assert rep["ap50"] == 1.0 and rep["recall"] == 1.0
    assert rep["fp"] > 0 and rep["precision"] < 1.0
    code, out = cli("evaluate", "--preds", gts, "--gts", gts, "--format", "table")
    assert code == 0 and "mAP50 " in out
    code, out = cli("evaluate", "--preds", gts, "--gts", gts, "--iou", "0.5,0.75", "--out", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["ap50"] == 1.0 and [p["iou"] for p in rep["per_threshold"]] == [0.5, 0.75]
    assert cli("evaluate", "--preds", tmp_path / "nothing", "--gts", gts)[0] == 2


def test_analyze_equals_composition(frames, tmp_path):
    a = tmp_path / "a"
    code, stdout_a = cli("analyze", "--frames", frames, "--out-dir", a, *roi_args())
    assert code == 0
    traj = (a / "trajectories.csv").read_text().splitlines()
    assert len(traj) == 1 + 20

    b = tmp_path / "b"
    assert cli("segment", "--frames", frames, "--out-dir", b, *roi_args())[0] == 0
    assert cli("trajectory", "--detections", frames / "detections", "--manifest", b / "manifest.json",
               "--out", b / "trajectories.csv")[0] == 0
    code, stdout_b = cli("heatmap", "--trajectories", b / "trajectories.csv")
    assert code == 0
    assert stdout_a == stdout_b
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert names == ["heatmap.csv", "heatmap_weak_zones.json", "manifest.json", "score_log.jsonl",
                     "trajectories.csv", "trajectories.dat"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_analyze_is_deterministic(frames, tmp_path):
    for d in ("x", "y"):
        assert cli("analyze", "--frames", frames, "--out-dir", tmp_path / d, "--jobs", 2, *roi_args())[0] == 0
    for p in sorted((tmp_path / "x").iterdir()):
        assert p.read_bytes() == (tmp_path / "y" / p.name).read_bytes()


def test_heatmap_grid_and_top_k(frames, tmp_path):
    cli("analyze", "--frames", frames, "--out-dir", tmp_path, *roi_args())
    code, out = cli("heatmap", "--trajectories", tmp_path / "trajectories.csv", "--grid", "4x5",
                    "--top-k", 2, "--out", tmp_path / "small.csv")
    assert code == 0
    rows = (tmp_path / "small.csv").read_text().splitlines()
    assert len(rows) == 5 and all(len(r.split(",")) == 4 for r in rows)
    report = json.loads(out)
    assert report["total"] == 20 and len(report["weak_zones"]) == 2


def test_trajectory_needs_meta(frames, tmp_path):
    det = tmp_path / "det"
    shutil.copytree(frames / "detections", det)
    (tmp_path / "m.json").write_text("[]")
    (tmp_path / "m.json").rename(tmp_path / "sub.json")
    code, _ = cli("trajectory", "--detections", det, "--manifest", tmp_path / "sub.json", "--out", tmp_path / "t.csv")
    assert code == 1
    code, _ = cli("trajectory", "--detections", det, "--manifest", tmp_path / "sub.json",
                  "--out", tmp_path / "t.csv", "--meta", frames / "meta.json")
    assert code == 0
    assert (tmp_path / "t.csv").read_text() == "clip_label,frame_index,t,u,v,confidence\n"


def test_gen_fixture_seed_override(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"duration_s": 1, "score_changes": [[0, 20, 1]], "noise": 0.02}))
    cli("gen-fixture", "--script", tmp_path / "s.json", "--out-dir", tmp_path / "a", "--seed", 1)
    cli("gen-fixture", "--script", tmp_path / "s.json", "--out-dir", tmp_path / "b", "--seed", 2)
    a = (tmp_path / "a" / "frame_000000.ppm").read_bytes()
    assert a != (tmp_path / "b" / "frame_000000.ppm").read_bytes()
    assert json.loads((tmp_path / "a" / "ground_truth.json").read_text())["seed"] == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wicketlens", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-fixture" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "wicketlens", "evaluate"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stdout == "" and "usage" in proc.stderr
