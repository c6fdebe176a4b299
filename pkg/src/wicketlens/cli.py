"""``wicketlens`` command line.

Exit codes: 0 success, 1 usage error, 2 input/validation error, 3 external
tool error.  Diagnostics go to stderr; machine-readable output goes to files
or stdout.  Flags override the config file, which overrides defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import Config, load_config
from .detections import IOU_THRESHOLDS, evaluate
from .errors import ExternalToolError, OcrEngineError, WicketLensError
from .fixtures import MatchScript, gen_match_sequence, load_script
from .raster import STAGES, Roi, preprocess_scorecard, read_image, write_image
from .segmenter import (
    FrameDirectory,
    emit_clip_manifest,
    read_clip_manifest,
    read_meta,
    run_segmentation,
    run_trimmer,
)
from .trajectory import (
    accumulate_heatmap,
    build_trajectory,
    heatmap_csv,
    load_frame_detections,
    read_trajectories,
    trajectories_csv,
    trajectory_polyline,
    weak_zones,
)

log = logging.getLogger("wicketlens")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_EXTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _roi_arg(text):
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected x,y,w,h") from None
    return Roi(x, y, w, h)


def _stages_arg(text):
    stages = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown stage(s) {bad}; choose from {','.join(STAGES)}")
    return stages


def _grid_arg(text):
    try:
        nu, nv = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected NUxNV, e.g. 10x20") from None
    if nu < 1 or nv < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be >= 1")
    return nu, nv


def _floats_arg(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _add_pipeline_flags(p):
    p.add_argument("--frames", required=True, help="frame directory (frame_%%06d.ppm + meta.json)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out-dir", help="directory for manifest.json and score_log.jsonl")
    p.add_argument("--roi", type=_roi_arg, help="scorecard region x,y,w,h")
    p.add_argument("--interval", type=float, help="sampling interval in seconds")
    p.add_argument("--score-format", choices=("wickets_first", "runs_first", "auto"))
    p.add_argument("--debounce", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--stages", type=_stages_arg, help="preprocessing stages to run")
    p.add_argument("--ocr-engine", choices=("builtin", "external"))
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--trim-command", help="template with {input} {start} {end} {output}")
    p.add_argument("--video", help="source video handed to --trim-command")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wicketlens", description="Wicket segmentation and trajectory analytics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("segment", help="detect wickets and write the clip manifest")
    _add_pipeline_flags(p)
    p.add_argument("--out", help="manifest path (default OUT_DIR/manifest.json)")

    p = sub.add_parser("analyze", help="segment, then build trajectories and the heatmap")
    _add_pipeline_flags(p)
    p.add_argument("--detections", help="detection directory (default FRAMES/detections)")
    p.add_argument("--grid", type=_grid_arg)
    p.add_argument("--top-k", type=int, default=5)

    p = sub.add_parser("preprocess", help="run the scorecard preprocessing chain on one image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--roi", type=_roi_arg)
    p.add_argument("--stages", type=_stages_arg, default=STAGES)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("evaluate", help="precision/recall/mAP of YOLO prediction files")
    p.add_argument("--preds", required=True)
    p.add_argument("--gts", required=True)
    p.add_argument("--iou", type=_floats_arg, default=IOU_THRESHOLDS, help="IoU thresholds")
    p.add_argument("--conf", type=float, help="operating-point confidence threshold")
    p.add_argument("--config")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("trajectory", help="build pitch-plane trajectories for manifest clips")
    p.add_argument("--detections", required=True, help="directory holding pitch/ and ball/")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="trajectory CSV path; a .dat polyline is written beside it")
    p.add_argument("--meta", help="meta.json with fps (default: searched next to the detections)")
    p.add_argument("--config")

    p = sub.add_parser("heatmap", help="bin trajectories and rank weak zones")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--grid", type=_grid_arg)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--out", help="heatmap grid CSV (default: heatmap.csv beside the trajectories)")
    p.add_argument("--config")

    p = sub.add_parser("gen-fixture", help="render a synthetic match or detection fixture")
    p.add_argument("--script", required=True, help="match script JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    return parser


def _config(args) -> Config:
    cfg = load_config(getattr(args, "config", None), os.environ)
    if getattr(args, "roi", None) is not None:
        cfg.roi = args.roi
    if getattr(args, "interval", None) is not None:
        cfg.sample_interval_s = args.interval
    if getattr(args, "score_format", None) is not None:
        cfg.score_format = args.score_format
    if getattr(args, "debounce", None) is not None:
        cfg.debounce = args.debounce
    if getattr(args, "gamma", None) is not None:
        cfg.gamma = args.gamma
    if getattr(args, "ocr_engine", None) is not None:
        cfg.ocr = {**cfg.ocr, "engine": args.ocr_engine}
    if getattr(args, "grid", None) is not None:
        cfg.heatmap = {"nu": args.grid[0], "nv": args.grid[1]}
    if getattr(args, "conf", None) is not None:
        cfg.eval = {"conf_threshold": args.conf}
    return cfg.validate()


def _segment(args, cfg: Config):
    frames = FrameDirectory(args.frames)
    result = run_segmentation(frames, cfg.roi, cfg.segment_config(args.stages, max(1, args.jobs)))
    log.info("%d wicket event(s), %d clip(s)", len(result.events), len(result.clips))
    return frames, result


def _write_segmentation(result, out_dir: Path, manifest: Path | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest or out_dir / "manifest.json"
    emit_clip_manifest(result.clips, manifest)
    (out_dir / "score_log.jsonl").write_text(result.score_log_jsonl(), encoding="utf-8")
    return manifest


def _maybe_trim(args, clips, out_dir: Path):
    if not args.trim_command:
        return
    if not args.video:
        raise UsageError("--trim-command needs --video")
    done = run_trimmer(clips, args.video, args.trim_command, out_dir / "clips")
    if len(done) < len(clips):
        log.warning("trimmer produced %d of %d clips", len(done), len(clips))


def _trajectories(detections_dir, clips, meta, cfg: Config):
    dets = load_frame_detections(detections_dir)
    trajs = []
    for clip in clips:
        traj = build_trajectory(dets, clip, meta.fps, meta.start_time, cfg.pitch_gap_frames)
        if traj is None:
            log.info("no in-pitch ball positions for %s", clip.label)
        else:
            trajs.append(traj)
    return trajs


def _write_trajectories(trajs, out: Path):
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(trajectories_csv(trajs), encoding="utf-8")
    out.with_suffix(".dat").write_text(trajectory_polyline(trajs), encoding="utf-8")


def _write_heatmap(trajs, cfg: Config, out: Path, top_k: int) -> str:
    hm = accumulate_heatmap(trajs, int(cfg.heatmap["nu"]), int(cfg.heatmap["nv"]))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(heatmap_csv(hm), encoding="utf-8")
    zones = [
        {"bin_u": z.bin_u, "bin_v": z.bin_v, "count": z.count, "share": z.share}
        for z in weak_zones(hm, top_k)
    ]
    text = json.dumps({"total": hm.total, "weak_zones": zones}, indent=2) + "\n"
    out.with_name(out.stem + "_weak_zones.json").write_text(text, encoding="utf-8")
    return text


def cmd_segment(args, out):
    cfg = _config(args)
    if not args.out_dir and not args.out:
        raise UsageError("segment needs --out-dir or --out")
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.out).parent
    _, result = _segment(args, cfg)
    manifest = _write_segmentation(result, out_dir, Path(args.out) if args.out else None)
    _maybe_trim(args, result.clips, out_dir)
    out.write(f"{manifest}\n")


def cmd_analyze(args, out):
    cfg = _config(args)
    if not args.out_dir:
        raise UsageError("analyze needs --out-dir")
    out_dir = Path(args.out_dir)
    frames, result = _segment(args, cfg)
    _write_segmentation(result, out_dir)
    _maybe_trim(args, result.clips, out_dir)
    det_dir = Path(args.detections) if args.detections else frames.path / "detections"
    trajs = _trajectories(det_dir, result.clips, frames.meta, cfg)
    _write_trajectories(trajs, out_dir / "trajectories.csv")
    out.write(_write_heatmap(trajs, cfg, out_dir / "heatmap.csv", args.top_k))


def cmd_preprocess(args, out):
    cfg = _config(args)
    img = read_image(args.input)
    result = preprocess_scorecard(img, cfg.roi, cfg.preprocess_params(), args.stages)
    write_image(result, args.out)


def cmd_evaluate(args, out):
    cfg = _config(args)
    report = evaluate(args.preds, args.gts, args.iou, float(cfg.eval["conf_threshold"]))
    for stem in report.missing_predictions:
        log.warning("no prediction file for %s; skipped", stem)
    for stem in report.missing_ground_truth:
        log.warning("no ground-truth file for %s; skipped", stem)
    text = report.to_json() if args.format == "json" else report.to_table()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def _find_meta(args):
    if args.meta:
        return read_meta(args.meta)
    det = Path(args.detections)
    for cand in (det / "meta.json", det.parent / "meta.json", Path(args.manifest).parent / "meta.json"):
        if cand.exists():
            return read_meta(cand)
    raise UsageError("cannot find meta.json for frame timing; pass --meta")


def cmd_trajectory(args, out):
    cfg = _config(args)
    meta = _find_meta(args)
    clips = read_clip_manifest(args.manifest)
    trajs = _trajectories(args.detections, clips, meta, cfg)
    _write_trajectories(trajs, Path(args.out))


def cmd_heatmap(args, out):
    cfg = _config(args)
    trajs = read_trajectories(args.trajectories)
    target = Path(args.out) if args.out else Path(args.trajectories).with_name("heatmap.csv")
    out.write(_write_heatmap(trajs, cfg, target, args.top_k))


def cmd_gen_fixture(args, out):
    script = load_script(args.script)
    if args.seed is not None:
        script = MatchScript.from_dict({**script.to_dict(), "seed": args.seed})
    truth = gen_match_sequence(script, args.out_dir)
    out.write(json.dumps({"events": truth["events"], "seed": truth["seed"]}) + "\n")


COMMANDS = {
    "segment": cmd_segment,
    "analyze": cmd_analyze,
    "preprocess": cmd_preprocess,
    "evaluate": cmd_evaluate,
    "trajectory": cmd_trajectory,
    "heatmap": cmd_heatmap,
    "gen-fixture": cmd_gen_fixture,
}


def run_cli(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="wicketlens: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        print(f"wicketlens {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OcrEngineError, ExternalToolError) as exc:
        print(f"wicketlens: external tool error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (WicketLensError, OSError, ValueError) as exc:
        print(f"wicketlens: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
