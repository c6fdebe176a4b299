"""Ball trajectories on the pitch plane, heatmaps and weak-zone ranking.

Ball and pitch come from two single-class detectors, stored side by side as
``pitch/frame_%06d.txt`` and ``ball/frame_%06d.txt``.  A ball position counts
only when its centre lies inside the pitch box of the same frame; it is then
expressed in pitch coordinates: ``u`` across the pitch, ``v`` along it, both
in [0, 1].
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .detections import BBoxNorm, Detection, best_ball_per_frame, parse_yolo_file
from .errors import InvalidInputError, InvalidParameterError, ParseError

FRAME_STEM = re.compile(r"^frame_(\d+)$")
TRAJECTORY_HEADER = ("clip_label", "frame_index", "t", "u", "v", "confidence")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    frame_index: int
    u: float
    v: float
    confidence: float = 1.0


@dataclass
class Trajectory:
    clip_label: str
    points: list = field(default_factory=list)


@dataclass
class FrameDetections:
    """Per-frame pitch and ball detections keyed by frame index."""

    pitch: dict = field(default_factory=dict)
    ball: dict = field(default_factory=dict)


def _frame_index(stem: str) -> Optional[int]:
    m = FRAME_STEM.match(stem)
    return int(m.group(1)) if m else None


def _read_side(directory: Path) -> dict:
    out = {}
    if not directory.is_dir():
        return out
    for p in sorted(directory.glob("frame_*.txt")):
        idx = _frame_index(p.stem)
        if idx is not None:
            out[idx] = parse_yolo_file(p)
    return out


def load_frame_detections(directory) -> FrameDetections:
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"detection directory {directory} does not exist")
    return FrameDetections(_read_side(directory / "pitch"), _read_side(directory / "ball"))


def ball_in_pitch(ball: BBoxNorm, pitch: BBoxNorm) -> bool:
    x0, y0, x1, y1 = pitch.corners()
    return x0 <= ball.cx <= x1 and y0 <= ball.cy <= y1


def normalize_to_pitch(ball: BBoxNorm, pitch: BBoxNorm) -> tuple[float, float]:
    x0, y0, x1, y1 = pitch.corners()
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise InvalidInputError("pitch box has zero extent")
    return (ball.cx - x0) / (x1 - x0), (ball.cy - y0) / (y1 - y0)


def build_trajectory(
    frame_dets: FrameDetections,
    clip,
    fps: float,
    start_time: float = 0.0,
    pitch_gap_frames: int = 15,
) -> Optional[Trajectory]:
    """Collect in-pitch ball positions over the clip's frame range.

    A frame without a pitch detection borrows the most recent pitch box seen
    at most ``pitch_gap_frames`` frames earlier.
    """
    if fps <= 0:
        raise InvalidParameterError("fps must be positive")
    last_pitch: Optional[Detection] = None
    last_pitch_frame = None
    for idx in range(max(0, clip.frame_start - pitch_gap_frames), clip.frame_start):
        p = best_ball_per_frame(frame_dets.pitch.get(idx, ()))
        if p is not None:
            last_pitch, last_pitch_frame = p, idx

    points = []
    for idx in range(clip.frame_start, clip.frame_end + 1):
        p = best_ball_per_frame(frame_dets.pitch.get(idx, ()))
        if p is not None:
            last_pitch, last_pitch_frame = p, idx
        if last_pitch is None or idx - last_pitch_frame > pitch_gap_frames:
            continue
        ball = best_ball_per_frame(frame_dets.ball.get(idx, ()))
        if ball is None or not ball_in_pitch(ball.bbox, last_pitch.bbox):
            continue
        u, v = normalize_to_pitch(ball.bbox, last_pitch.bbox)
        points.append(TrajectoryPoint(idx / fps + start_time, idx, u, v, ball.score))
    if not points:
        return None
    return Trajectory(clip.label, points)


@dataclass
class Heatmap:
    nu: int = 10
    nv: int = 20
    counts: np.ndarray = None

    def __post_init__(self):
        if self.nu < 1 or self.nv < 1:
            raise InvalidParameterError("heatmap grid must be at least 1x1")
        if self.counts is None:
            self.counts = np.zeros((self.nv, self.nu), dtype=np.int64)
        elif self.counts.shape != (self.nv, self.nu):
            raise InvalidInputError(f"counts shape {self.counts.shape} != ({self.nv}, {self.nu})")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count(self, bin_u: int, bin_v: int) -> int:
        return int(self.counts[bin_v, bin_u])


def point_bin(u: float, v: float, nu: int, nv: int) -> tuple[int, int]:
    bu = min(int(np.floor(u * nu)), nu - 1)
    bv = min(int(np.floor(v * nv)), nv - 1)
    return max(bu, 0), max(bv, 0)


def accumulate_heatmap(trajs, nu: int = 10, nv: int = 20) -> Heatmap:
    hm = Heatmap(nu, nv)
    for traj in trajs:
        for pt in traj.points:
            bu, bv = point_bin(pt.u, pt.v, nu, nv)
            hm.counts[bv, bu] += 1
    return hm


@dataclass(frozen=True)
class WeakZone:
    bin_u: int
    bin_v: int
    count: int
    share: float


def weak_zones(hm: Heatmap, k: int = 5) -> list[WeakZone]:
    """The ``k`` busiest non-empty bins; ties go to the lower ``bin_v``, then ``bin_u``."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    total = hm.total
    if total == 0:
        return []
    cells = [
        (-int(hm.counts[bv, bu]), bv, bu)
        for bv in range(hm.nv)
        for bu in range(hm.nu)
        if hm.counts[bv, bu] > 0
    ]
    cells.sort()
    return [WeakZone(bu, bv, -c, -c / total) for c, bv, bu in cells[:k]]


# --- plot data export ----------------------------------------------------


def trajectories_csv(trajs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for traj in trajs:
        for p in traj.points:
            w.writerow([traj.clip_label, p.frame_index, repr(p.t), repr(p.u), repr(p.v), repr(p.confidence)])
    return buf.getvalue()


def parse_trajectories_csv(text: str) -> list[Trajectory]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRAJECTORY_HEADER:
        raise ParseError("trajectory CSV must start with header " + ",".join(TRAJECTORY_HEADER))
    trajs: list[Trajectory] = []
    by_label = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(TRAJECTORY_HEADER):
            raise ParseError(f"expected {len(TRAJECTORY_HEADER)} columns", line=lineno)
        try:
            label = row[0]
            pt = TrajectoryPoint(float(row[2]), int(row[1]), float(row[3]), float(row[4]), float(row[5]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if label not in by_label:
            by_label[label] = Trajectory(label, [])
            trajs.append(by_label[label])
        by_label[label].points.append(pt)
    return trajs


def read_trajectories(path) -> list[Trajectory]:
    return parse_trajectories_csv(Path(path).read_text(encoding="utf-8"))


def heatmap_csv(hm: Heatmap) -> str:
    return "".join(",".join(str(int(c)) for c in row) + "\n" for row in hm.counts)


def parse_heatmap_csv(text: str) -> Heatmap:
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    if not rows:
        raise ParseError("empty heatmap grid")
    try:
        counts = np.array([[int(c) for c in r] for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"bad heatmap grid: {exc}") from None
    nv, nu = counts.shape
    return Heatmap(nu, nv, counts)


def trajectory_polyline(trajs) -> str:
    """gnuplot ``splot`` data: u v t per line, one indexed block per clip."""
    out = ["# u v t\n"]
    for i, traj in enumerate(trajs):
        if i:
            out.append("\n\n")
        out.append(f"# {traj.clip_label}\n")
        for p in traj.points:
            out.append(f"{p.u!r} {p.v!r} {p.t!r}\n")
    return "".join(out)


def export_plot_data(trajs, hm: Heatmap, path_prefix) -> dict:
    prefix = str(path_prefix)
    paths = {
        "trajectories": Path(prefix + "_trajectories.csv"),
        "heatmap": Path(prefix + "_heatmap.csv"),
        "polyline": Path(prefix + "_trajectory3d.dat"),
    }
    paths["trajectories"].parent.mkdir(parents=True, exist_ok=True)
    paths["trajectories"].write_text(trajectories_csv(trajs), encoding="utf-8")
    paths["heatmap"].write_text(heatmap_csv(hm), encoding="utf-8")
    paths["polyline"].write_text(trajectory_polyline(trajs), encoding="utf-8")
    return paths
