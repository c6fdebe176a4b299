"""Synthetic, seeded test assets with machine-readable ground truth.

Scoreboard sequences are white 5x7 block glyphs on black, written in the
frame-directory layout the segmenter reads.  Detection fixtures are pitch and
ball YOLO files whose ball centres trace a known path in pitch coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .detections import BBoxNorm, Detection, write_yolo_file
from .errors import InvalidParameterError, LayoutError, ValidationError
from .ocr import DEFAULT_FONT, text_mask
from .raster import RasterImage, Roi, encode_pnm
from .scoreparse import RUNS_FIRST, WICKETS_FIRST, ScoreReading, detect_innings_reset, format_score
from .segmenter import VideoMeta, write_meta

MAX_NOISE = 0.05


@dataclass(frozen=True)
class ScoreboardStyle:
    separator: str = "-"
    order: str = RUNS_FIRST
    scale: int = 16
    roi: Roi = Roi(16, 8, 608, 152)
    padding: int = 16

    def __post_init__(self):
        if self.separator not in ("-", "/"):
            raise InvalidParameterError(f"separator must be '-' or '/', got {self.separator!r}")
        if self.order not in (RUNS_FIRST, WICKETS_FIRST):
            raise InvalidParameterError(f"unknown score order {self.order!r}")
        if self.scale < 1:
            raise InvalidParameterError("glyph scale must be >= 1")


def render_scoreboard_frame(score, style: ScoreboardStyle = ScoreboardStyle(), size=(640, 168)) -> RasterImage:
    """Black BGR frame of ``size`` (width, height) with the score in the ROI."""
    runs, wickets = score
    width, height = size
    roi = style.roi
    if roi.x + roi.w > width or roi.y + roi.h > height:
        raise LayoutError(f"roi {roi} does not fit a {width}x{height} frame")
    text = format_score(runs, wickets, style.separator, style.order)
    mask = text_mask(text, DEFAULT_FONT.with_scale(style.scale))
    th, tw = mask.shape
    if tw + 2 * style.padding > roi.w or th + 2 * style.padding > roi.h:
        raise LayoutError(
            f"{text!r} at scale {style.scale} needs {tw + 2 * style.padding}x"
            f"{th + 2 * style.padding} px, roi is {roi.w}x{roi.h}"
        )
    px = np.zeros((height, width, 3), dtype=np.uint8)
    y0 = roi.y + (roi.h - th) // 2
    x0 = roi.x + style.padding
    px[y0 : y0 + th, x0 : x0 + tw][mask] = 255
    return RasterImage(px)


def add_salt_pepper(img: RasterImage, density: float, rng: np.random.Generator) -> RasterImage:
    """Set a ``density`` fraction of pixels to black or white, half each on average."""
    if not 0.0 <= density <= MAX_NOISE:
        raise InvalidParameterError(f"noise density must be in [0, {MAX_NOISE}], got {density}")
    if density == 0:
        return img
    px = img.pixels.copy()
    r = rng.random(px.shape[:2])
    px[r < density / 2] = 0
    px[(r >= density / 2) & (r < density)] = 255
    return RasterImage(px)


@dataclass
class MatchScript:
    """Scripted scoreboard timeline.

    ``score_changes`` holds ``(t, runs, wickets)``; the first entry should be
    at t=0 and sets the opening score.
    """

    fps: float = 10.0
    duration_s: float = 10.0
    score_changes: list = field(default_factory=lambda: [(0.0, 0, 0)])
    style: ScoreboardStyle = ScoreboardStyle()
    frame_size: tuple = (640, 168)
    noise: float = 0.0
    seed: int = 0
    deliveries: list = field(default_factory=list)

    def __post_init__(self):
        if not self.fps > 0 or not self.duration_s > 0:
            raise ValidationError("fps and duration_s must be positive")
        if not 0.0 <= self.noise <= MAX_NOISE:
            raise ValidationError(f"noise density must be in [0, {MAX_NOISE}]")
        if not self.score_changes:
            raise ValidationError("score_changes must not be empty")
        self.score_changes = [(float(t), int(r), int(w)) for t, r, w in self.score_changes]
        prev = None
        for t, r, w in self.score_changes:
            if not 0 <= w <= 10 or r < 0:
                raise ValidationError(f"invalid score {r}-{w} at t={t}")
            if prev is not None:
                pt, pr, pw = prev
                if t < pt:
                    raise ValidationError("score_changes must be ordered by time")
                going_back = r < pr or w < pw
                if going_back and not detect_innings_reset(ScoreReading(pr, pw), ScoreReading(r, w)):
                    raise ValidationError(f"score {r}-{w} at t={t} decreases within an innings")
            prev = (t, r, w)

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.fps))

    def score_at(self, t: float) -> tuple[int, int]:
        score = self.score_changes[0][1:]
        for ct, r, w in self.score_changes:
            if ct <= t + 1e-9:
                score = (r, w)
        return score

    def events(self) -> list[dict]:
        """Ground-truth wicket events implied by the score changes."""
        out = []
        innings = 0
        prev = self.score_changes[0]
        for t, r, w in self.score_changes[1:]:
            pt, pr, pw = prev
            if r < pr or w < pw:
                innings += 1
            else:
                for k in range(pw, w):
                    out.append(
                        {"t": t, "wickets_before": k, "wickets_after": k + 1, "runs": r, "innings": innings + 1}
                    )
            prev = (t, r, w)
        return out

    def to_dict(self) -> dict:
        s = self.style
        return {
            "fps": self.fps,
            "duration_s": self.duration_s,
            "score_changes": [list(c) for c in self.score_changes],
            "separator": s.separator,
            "order": s.order,
            "scale": s.scale,
            "roi": {"x": s.roi.x, "y": s.roi.y, "w": s.roi.w, "h": s.roi.h},
            "padding": s.padding,
            "frame_size": list(self.frame_size),
            "noise": self.noise,
            "seed": self.seed,
            "deliveries": [dict(d) for d in self.deliveries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> MatchScript:
        known = {
            "fps", "duration_s", "score_changes", "separator", "order", "scale",
            "roi", "padding", "frame_size", "noise", "seed", "deliveries",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown match script keys {sorted(unknown)}")
        defaults = ScoreboardStyle()
        roi = d.get("roi")
        style = ScoreboardStyle(
            separator=d.get("separator", defaults.separator),
            order=d.get("order", defaults.order),
            scale=int(d.get("scale", defaults.scale)),
            roi=Roi(int(roi["x"]), int(roi["y"]), int(roi["w"]), int(roi["h"])) if roi else defaults.roi,
            padding=int(d.get("padding", defaults.padding)),
        )
        return cls(
            fps=float(d.get("fps", 10.0)),
            duration_s=float(d.get("duration_s", 10.0)),
            score_changes=d.get("score_changes", [(0.0, 0, 0)]),
            style=style,
            frame_size=tuple(d.get("frame_size", (640, 168))),
            noise=float(d.get("noise", 0.0)),
            seed=int(d.get("seed", 0)),
            deliveries=list(d.get("deliveries", [])),
        )


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    # one stream per frame: rendering order cannot change the noise
    return np.random.default_rng([seed, frame_index])


def gen_match_sequence(script: MatchScript, out_dir) -> dict:
    """Write frames, ``meta.json`` and ``ground_truth.json``; return the ground truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width, height = script.frame_size
    meta = VideoMeta(script.fps, script.frame_count, width, height, 0.0)
    cache = {}
    for i in range(script.frame_count):
        score = script.score_at(i / script.fps)
        if script.noise > 0:
            clean = cache.get(score) or render_scoreboard_frame(score, script.style, script.frame_size)
            cache = {score: clean}
            data = encode_pnm(add_salt_pepper(clean, script.noise, frame_rng(script.seed, i)))
        else:
            data = cache.get(score)
            if data is None:
                data = encode_pnm(render_scoreboard_frame(score, script.style, script.frame_size))
                cache = {score: data}
        (out_dir / f"frame_{i:06d}.ppm").write_bytes(data)
    write_meta(meta, out_dir / "meta.json")

    truth = {
        "fps": script.fps,
        "frame_count": script.frame_count,
        "roi": {"x": script.style.roi.x, "y": script.style.roi.y,
                "w": script.style.roi.w, "h": script.style.roi.h},
        "seed": script.seed,
        "noise": script.noise,
        "events": script.events(),
        "script": script.to_dict(),
    }
    if script.deliveries:
        truth["trajectories"] = []
        for k, spec in enumerate(script.deliveries):
            pts = gen_detection_fixture(
                DetectionScript.from_dict(spec), out_dir / "detections", seed=script.seed + k
            )
            truth["trajectories"].append([list(p) for p in pts])
    (out_dir / "ground_truth.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return truth


@dataclass
class DetectionScript:
    """Parametric ball path over a frame range, in pitch coordinates.

    ``path`` maps a frame index to ``(u, v)``, or to None for frames where
    the ball is not detected.  ``outside_frames`` place the ball outside the
    pitch box; ``pitch_dropouts`` omit the pitch detection for that frame.
    """

    pitch: tuple = (0.3, 0.1, 0.7, 0.9)
    frame_start: int = 0
    frame_end: int = 9
    path: Callable = lambda i: (0.5, 0.5)
    ball_size: float = 0.01
    confidence: float = 0.9
    outside_frames: frozenset = frozenset()
    pitch_dropouts: frozenset = frozenset()
    decoys: bool = False

    def __post_init__(self):
        x0, y0, x1, y1 = self.pitch
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValidationError(f"pitch corners {self.pitch} must lie inside the unit square")
        if self.frame_end < self.frame_start:
            raise ValidationError("frame_end must be >= frame_start")

    @classmethod
    def linear(cls, start_uv, end_uv, **kw) -> DetectionScript:
        (u0, v0), (u1, v1) = start_uv, end_uv
        fs, fe = kw.get("frame_start", 0), kw.get("frame_end", 9)
        span = max(fe - fs, 1)

        def path(i):
            s = (i - fs) / span
            return u0 + (u1 - u0) * s, v0 + (v1 - v0) * s

        return cls(path=path, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> DetectionScript:
        known = {"pitch", "frame_start", "frame_end", "from", "to", "ball_size", "confidence",
                 "outside_frames", "pitch_dropouts", "decoys"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown delivery keys {sorted(unknown)}")
        return cls.linear(
            tuple(d.get("from", (0.5, 0.0))),
            tuple(d.get("to", (0.5, 1.0))),
            pitch=tuple(d.get("pitch", (0.3, 0.1, 0.7, 0.9))),
            frame_start=int(d.get("frame_start", 0)),
            frame_end=int(d.get("frame_end", 9)),
            ball_size=float(d.get("ball_size", 0.01)),
            confidence=float(d.get("confidence", 0.9)),
            outside_frames=frozenset(d.get("outside_frames", ())),
            pitch_dropouts=frozenset(d.get("pitch_dropouts", ())),
            decoys=bool(d.get("decoys", False)),
        )


def _ball_box(cx: float, cy: float, size: float) -> BBoxNorm:
    return BBoxNorm(cx, cy, size, size)


def gen_detection_fixture(spec: DetectionScript, out_dir, seed: int = 0) -> list[tuple]:
    """Write ``pitch/`` and ``ball/`` YOLO files for the scripted path.

    Returns ground truth as ``(frame_index, u, v)`` for every frame where the
    ball is inside the pitch.  Existing files for other frames are kept, so
    several deliveries can share one directory.
    """
    out_dir = Path(out_dir)
    (out_dir / "pitch").mkdir(parents=True, exist_ok=True)
    (out_dir / "ball").mkdir(parents=True, exist_ok=True)
    x0, y0, x1, y1 = spec.pitch
    pitch_box = BBoxNorm.from_corners(x0, y0, x1, y1)
    rng = np.random.default_rng(seed)
    truth = []
    for i in range(spec.frame_start, spec.frame_end + 1):
        stem = f"frame_{i:06d}.txt"
        pitch = [] if i in spec.pitch_dropouts else [Detection(0, pitch_box, 0.95)]
        write_yolo_file(pitch, out_dir / "pitch" / stem)
        uv = spec.path(i)
        balls = []
        if uv is not None:
            u, v = uv
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0) or math.isnan(u) or math.isnan(v):
                raise ValidationError(f"path value ({u}, {v}) at frame {i} outside [0, 1]^2")
            if i in spec.outside_frames:
                # mirror the ball to the side of the pitch with more room
                cx = x1 + (1.0 - x1) / 2 if 1.0 - x1 > x0 else x0 / 2
                if not (cx < x0 or cx > x1):
                    raise ValidationError("no room outside the pitch box for an off-pitch ball")
                balls.append(Detection(0, _ball_box(cx, y0 + v * (y1 - y0), spec.ball_size), spec.confidence))
            else:
                cx = x0 + u * (x1 - x0)
                cy = y0 + v * (y1 - y0)
                balls.append(Detection(0, _ball_box(cx, cy, spec.ball_size), spec.confidence))
                truth.append((i, u, v))
            if spec.decoys:
                # a weaker second ball somewhere else must never win
                decoy_conf = float(rng.uniform(0.05, spec.confidence * 0.9))
                balls.append(Detection(0, _ball_box(float(rng.uniform(0.05, 0.95)),
                                                    float(rng.uniform(0.05, 0.95)), spec.ball_size),
                                       decoy_conf))
        write_yolo_file(balls, out_dir / "ball" / stem)
    return truth


def load_script(path) -> MatchScript:
    return MatchScript.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
