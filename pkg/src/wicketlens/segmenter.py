"""Frame-timeline driver: sampled frames -> OCR scores -> wicket clips."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import ocr as ocr_mod
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    OcrEngineError,
    ParseError,
)
from .raster import STAGES, PreprocessParams, Roi, crop, preprocess_scorecard, read_image
from .scoreparse import (
    AUTO,
    ScoreTracker,
    TrackerConfig,
    WicketEvent,
    check_policy,
    parse_score,
)

log = logging.getLogger(__name__)

FRAME_EXTENSIONS = (".ppm", ".pgm", ".png")
MANIFEST_KEYS = (
    "label",
    "innings",
    "wicket_number",
    "start_s",
    "end_s",
    "frame_start",
    "frame_end",
    "runs_at_event",
    "event_t",
    "event_frame",
)


@dataclass(frozen=True)
class VideoMeta:
    fps: float
    frame_count: int
    width: int = 0
    height: int = 0
    start_time: float = 0.0

    def __post_init__(self):
        if not self.fps > 0:
            raise InvalidParameterError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 0:
            raise InvalidParameterError("frame_count must be >= 0")

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps

    def time_of(self, frame_index: int) -> float:
        return frame_index / self.fps + self.start_time

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "frame_count": self.frame_count,
            "width": self.width,
            "height": self.height,
            "start_time": self.start_time,
        }


def read_meta(path) -> VideoMeta:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"missing {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", path=path) from None
    unknown = set(raw) - {"fps", "frame_count", "width", "height", "start_time"}
    if unknown:
        raise InvalidInputError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return VideoMeta(
            fps=float(raw["fps"]),
            frame_count=int(raw["frame_count"]),
            width=int(raw.get("width", 0)),
            height=int(raw.get("height", 0)),
            start_time=float(raw.get("start_time", 0.0)),
        )
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing key {exc}") from None


def write_meta(meta: VideoMeta, path) -> None:
    Path(path).write_text(json.dumps(meta.to_dict(), indent=2) + "\n", encoding="utf-8")


class FrameDirectory:
    """Image-sequence input: ``frame_%06d.{ppm,pgm,png}`` plus ``meta.json``."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise InvalidInputError(f"frame directory {self.path} does not exist")
        self.meta = read_meta(self.path / "meta.json")

    def frame_path(self, index: int) -> Path:
        stem = f"frame_{index:06d}"
        for ext in FRAME_EXTENSIONS:
            p = self.path / (stem + ext)
            if p.exists():
                return p
        return self.path / (stem + FRAME_EXTENSIONS[0])

    def read(self, index: int):
        return read_image(self.frame_path(index))


def sample_timeline(meta: VideoMeta, interval_s: float) -> list[int]:
    if not interval_s > 0:
        raise InvalidParameterError(f"sampling interval must be positive, got {interval_s}")
    out = []
    k = 0
    while True:
        idx = math.floor(k * interval_s * meta.fps + 0.5)
        if idx >= meta.frame_count:
            break
        if not out or idx > out[-1]:
            out.append(idx)
        k += 1
    return out


@dataclass(frozen=True)
class ClipSpec:
    start_s: float
    end_s: float
    frame_start: int
    frame_end: int
    event: WicketEvent
    label: str

    @property
    def innings(self) -> int:
        return self.event.innings_index + 1

    @property
    def wicket_number(self) -> int:
        return self.event.wickets_after

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "innings": self.innings,
            "wicket_number": self.wicket_number,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "frame_start": self.frame_start,
            "frame_end": self.frame_end,
            "runs_at_event": self.event.runs_at_event,
            "event_t": self.event.t,
            "event_frame": self.event.frame_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClipSpec:
        missing = [k for k in MANIFEST_KEYS if k not in d]
        if missing:
            raise InvalidInputError(f"clip manifest entry lacks {missing}")
        event = WicketEvent(
            t=float(d["event_t"]),
            frame_index=int(d["event_frame"]),
            wickets_before=int(d["wicket_number"]) - 1,
            wickets_after=int(d["wicket_number"]),
            runs_at_event=int(d["runs_at_event"]),
            innings_index=int(d["innings"]) - 1,
        )
        return cls(
            float(d["start_s"]),
            float(d["end_s"]),
            int(d["frame_start"]),
            int(d["frame_end"]),
            event,
            str(d["label"]),
        )


def clip_label(event: WicketEvent) -> str:
    return f"wicket_{event.innings_index + 1}_{event.wickets_after}"


def event_to_clip(
    event: WicketEvent, pre_roll_s: float = 8.0, post_roll_s: float = 2.5, meta: VideoMeta = None
) -> ClipSpec:
    if pre_roll_s < 0 or post_roll_s < 0:
        raise InvalidParameterError("pre/post roll must be >= 0")
    t0 = meta.start_time
    end_limit = t0 + meta.duration
    start_s = max(t0, event.t - pre_roll_s)
    end_s = min(end_limit, event.t + post_roll_s)
    if end_s <= start_s:
        end_s = start_s + 1.0 / meta.fps
    last = max(meta.frame_count - 1, 0)
    # frames whose timestamps fall inside [start_s, end_s]
    frame_start = min(last, max(0, math.ceil((start_s - t0) * meta.fps - 1e-9)))
    frame_end = min(last, max(frame_start, math.floor((end_s - t0) * meta.fps + 1e-9)))
    return ClipSpec(start_s, end_s, frame_start, frame_end, event, clip_label(event))


def manifest_json(clips) -> str:
    return json.dumps([c.to_dict() for c in clips], indent=2) + "\n"


def emit_clip_manifest(clips, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest_json(clips), encoding="utf-8")


def read_clip_manifest(path) -> list[ClipSpec]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", path=path) from None
    if not isinstance(raw, list):
        raise InvalidInputError(f"{path}: clip manifest must be a JSON array")
    return [ClipSpec.from_dict(d) for d in raw]


@dataclass(frozen=True)
class SegmentConfig:
    roi: Optional[Roi] = None
    preprocess: PreprocessParams = PreprocessParams()
    stages: tuple = STAGES
    ocr: ocr_mod.OcrEngineConfig = ocr_mod.OcrEngineConfig()
    sample_interval_s: float = 0.1
    score_format: str = AUTO
    tracker: TrackerConfig = TrackerConfig()
    pre_roll_s: float = 8.0
    post_roll_s: float = 2.5
    jobs: int = 1
    unreadable_fatal_fraction: float = 0.5

    def __post_init__(self):
        check_policy(self.score_format)
        if not self.sample_interval_s > 0:
            raise InvalidParameterError("sample_interval_s must be positive")
        if self.jobs < 1:
            raise InvalidParameterError("jobs must be >= 1")


@dataclass
class SegmentationResult:
    events: list
    clips: list
    score_log: list = field(default_factory=list)
    meta: Optional[VideoMeta] = None

    def score_log_jsonl(self) -> str:
        return "".join(json.dumps(entry) + "\n" for entry in self.score_log)


class _FrameReader:
    """Reads, crops and OCRs frames; results are cached by crop digest."""

    def __init__(self, source, config: SegmentConfig):
        self.source = source
        self.config = config
        self.cache = {}

    def __call__(self, index: int):
        try:
            img = self.source.read(index)
            roi = self.config.roi or Roi(0, 0, img.width, img.height)
            img = crop(img, roi)
        except (OSError, InvalidInputError) as exc:
            return index, None, f"unreadable: {exc}"
        key = hashlib.blake2b(img.pixels.tobytes(), digest_size=16).hexdigest()
        key += f":{img.pixels.shape}"
        hit = self.cache.get(key)
        if hit is not None:
            return index, hit, None
        try:
            pre = preprocess_scorecard(img, None, self.config.preprocess, self.config.stages)
            result = ocr_mod.recognize(pre, self.config.ocr)
        except OcrEngineError as exc:
            return index, "", f"ocr_error: {exc}"
        self.cache[key] = result.text
        return index, result.text, None


def run_segmentation(frames_source, roi: Optional[Roi] = None, config: SegmentConfig | None = None):
    """Sample, read and track the whole frame timeline.

    ``frames_source`` is a :class:`FrameDirectory`, a path to one, or any
    object with ``meta`` and ``read(index)``.  OCR may run on ``config.jobs``
    threads; readings reach the tracker in timeline order regardless.
    """
    config = config or SegmentConfig()
    if roi is not None:
        config = replace(config, roi=roi)
    if isinstance(frames_source, (str, Path)):
        frames_source = FrameDirectory(frames_source)
    meta = frames_source.meta
    indices = sample_timeline(meta, config.sample_interval_s)
    reader = _FrameReader(frames_source, config)
    tracker = ScoreTracker(config.tracker)
    score_log = []
    unreadable = 0
    ocr_failures = 0

    if config.jobs > 1:
        pool = ThreadPoolExecutor(max_workers=config.jobs)
        results = pool.map(reader, indices)
    else:
        pool = None
        results = map(reader, indices)
    try:
        for index, text, problem in results:
            t = meta.time_of(index)
            entry = {"t": t, "frame_index": index, "text": text, "parsed": None, "decision": None}
            if text is None:
                unreadable += 1
                log.warning("frame %d skipped (%s)", index, problem)
                entry["decision"] = "unreadable"
                score_log.append(entry)
                continue
            if problem:
                ocr_failures += 1
                log.warning("frame %d: %s", index, problem)
            reading = parse_score(text, config.score_format, tracker.accepted, t, index)
            tracker.update(reading)
            if reading is not None:
                entry["parsed"] = [reading.runs, reading.wickets]
            entry["decision"] = tracker.last_decision
            score_log.append(entry)
    finally:
        if pool is not None:
            pool.shutdown()

    if indices and unreadable / len(indices) > config.unreadable_fatal_fraction:
        raise InvalidInputError(
            f"{unreadable} of {len(indices)} sampled frames were unreadable"
        )
    if indices and ocr_failures / len(indices) > config.unreadable_fatal_fraction:
        raise OcrEngineError(f"OCR engine failed on {ocr_failures} of {len(indices)} sampled frames")
    events = list(tracker.events)
    clips = [event_to_clip(e, config.pre_roll_s, config.post_roll_s, meta) for e in events]
    return SegmentationResult(events, clips, score_log, meta)


def run_trimmer(clips, video, command: str, out_dir) -> list[Path]:
    """Cut each clip out of ``video`` with an external command.

    The template takes ``{input} {start} {end} {output}``.  A failing clip is
    logged and skipped; the returned list holds the outputs that succeeded.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = Path(video).suffix or ".mp4"
    done = []
    for clip in clips:
        output = out_dir / f"{clip.label}{suffix}"
        subst = {
            "{input}": str(video),
            "{start}": f"{clip.start_s:.3f}",
            "{end}": f"{clip.end_s:.3f}",
            "{output}": str(output),
        }
        argv = []
        for tok in shlex.split(command):
            for k, v in subst.items():
                tok = tok.replace(k, v)
            argv.append(tok)
        try:
            proc = subprocess.run(argv, capture_output=True, check=False)
        except OSError as exc:
            log.warning("trimmer failed for %s: %s", clip.label, exc)
            continue
        if proc.returncode != 0:
            log.warning("trimmer exited with %d for %s", proc.returncode, clip.label)
            continue
        done.append(output)
    return done


__all__ = [
    "ClipSpec",
    "FrameDirectory",
    "SegmentConfig",
    "SegmentationResult",
    "VideoMeta",
    "emit_clip_manifest",
    "event_to_clip",
    "read_clip_manifest",
    "read_meta",
    "run_segmentation",
    "run_trimmer",
    "sample_timeline",
    "write_meta",
]
