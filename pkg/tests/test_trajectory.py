import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wicketlens.detections import BBoxNorm, Detection
from wicketlens.errors import InvalidInputError, InvalidParameterError, ParseError
from wicketlens.fixtures import DetectionScript, gen_detection_fixture
from wicketlens.scoreparse import WicketEvent
from wicketlens.segmenter import ClipSpec
from wicketlens.trajectory import (
    FrameDetections,
    Heatmap,
    Trajectory,
    TrajectoryPoint,
    accumulate_heatmap,
    ball_in_pitch,
    build_trajectory,
    export_plot_data,
    heatmap_csv,
    load_frame_detections,
    normalize_to_pitch,
    parse_heatmap_csv,
    parse_trajectories_csv,
    point_bin,
    trajectories_csv,
    trajectory_polyline,
    weak_zones,
)

PITCH = BBoxNorm.from_corners(0.2, 0.1, 0.8, 0.9)


def clip(frame_start, frame_end, label="wicket_1_1"):
    ev = WicketEvent(0.0, frame_start, 0, 1, 10)
    return ClipSpec(frame_start / 10, frame_end / 10, frame_start, frame_end, ev, label)


def ball(cx, cy, conf=0.9):
    return [Detection(0, BBoxNorm(cx, cy, 0.01, 0.01), conf)]


def traj(label, uvs, t0=0.0):
    return Trajectory(label, [TrajectoryPoint(t0 + i * 0.1, i, u, v, 0.8) for i, (u, v) in enumerate(uvs)])


# --- geometry ------------------------------------------------------------


def test_ball_in_pitch_closed_bounds():
    assert ball_in_pitch(BBoxNorm(0.5, 0.5, 0.01, 0.01), PITCH)
    assert ball_in_pitch(BBoxNorm(0.2, 0.5, 0.01, 0.01), PITCH)
    assert ball_in_pitch(BBoxNorm(0.8, 0.9, 0.01, 0.01), PITCH)
    assert not ball_in_pitch(BBoxNorm(0.1, 0.5, 0.01, 0.01), PITCH)


def test_normalize_examples():
    assert normalize_to_pitch(BBoxNorm(0.5, 0.3, 0.01, 0.01), PITCH) == pytest.approx((0.5, 0.25))
    assert normalize_to_pitch(BBoxNorm(0.5, 0.5, 0.01, 0.01), PITCH) == pytest.approx((0.5, 0.5))
    assert normalize_to_pitch(BBoxNorm(0.2, 0.1, 0.01, 0.01), PITCH) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_normalize_degenerate_pitch():
    # a box whose clipped extent vanishes: centred on the right edge, zero visible width
    thin = BBoxNorm(1.0, 0.5, 1e-300, 0.5)
    with pytest.raises(InvalidInputError):
        normalize_to_pitch(BBoxNorm(0.5, 0.5, 0.1, 0.1), thin)


@given(st.floats(0, 1), st.floats(0, 1))
def test_normalize_stays_in_unit_square(cx, cy):
    b = BBoxNorm(cx, cy, 0.01, 0.01)
    if ball_in_pitch(b, PITCH):
        u, v = normalize_to_pitch(b, PITCH)
        assert 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0


# --- trajectory building -------------------------------------------------


def test_twelve_of_twenty_frames(tmp_path):
    inside = [0, 1, 2, 4, 5, 7, 9, 10, 12, 15, 18, 19]
    outside = frozenset(range(20)) - set(inside)
    spec = DetectionScript.linear((0.5, 0.0), (0.5, 1.0), frame_start=100, frame_end=119,
                                  outside_frames=frozenset(100 + i for i in outside))
    truth = gen_detection_fixture(spec, tmp_path)
    dets = load_frame_detections(tmp_path)
    tr = build_trajectory(dets, clip(100, 119), fps=10)
    assert [p.frame_index for p in tr.points] == [100 + i for i in inside]
    assert len(tr.points) == 12 == len(truth)
    for p, (i, u, v) in zip(tr.points, truth):
        assert p.frame_index == i
        assert abs(p.u - u) <= 1e-6 and abs(p.v - v) <= 1e-6
        assert p.t == pytest.approx(i / 10)


def test_no_pitch_or_ball_outside_gives_none():
    dets = FrameDetections(pitch={}, ball={i: ball(0.5, 0.5) for i in range(10)})
    assert build_trajectory(dets, clip(0, 9), fps=10) is None
    dets = FrameDetections(
        pitch={i: [Detection(0, PITCH, 0.9)] for i in range(10)},
        ball={i: ball(0.05, 0.5) for i in range(10)},
    )
    assert build_trajectory(dets, clip(0, 9), fps=10) is None


def test_pitch_persistence_window():
    pitch = {0: [Detection(0, PITCH, 0.9)]}
    balls = {i: ball(0.5, 0.5) for i in range(0, 30)}
    tr = build_trajectory(FrameDetections(pitch, balls), clip(0, 29), fps=10)
    assert [p.frame_index for p in tr.points] == list(range(16))
    tr = build_trajectory(FrameDetections(pitch, balls), clip(0, 29), fps=10, pitch_gap_frames=3)
    assert [p.frame_index for p in tr.points] == [0, 1, 2, 3]


def test_pitch_from_before_clip_is_used():
    pitch = {95: [Detection(0, PITCH, 0.9)]}
    balls = {i: ball(0.5, 0.5) for i in range(100, 105)}
    tr = build_trajectory(FrameDetections(pitch, balls), clip(100, 104), fps=25, start_time=1.0)
    assert [p.frame_index for p in tr.points] == list(range(100, 105))
    assert tr.points[0].t == pytest.approx(1.0 + 100 / 25)


def test_best_ball_wins_over_decoys(tmp_path):
    spec = DetectionScript.linear((0.1, 0.2), (0.9, 0.8), frame_start=0, frame_end=30, decoys=True)
    truth = gen_detection_fixture(spec, tmp_path, seed=4)
    tr = build_trajectory(load_frame_detections(tmp_path), clip(0, 30), fps=10)
    assert [(p.frame_index, round(p.u, 9), round(p.v, 9)) for p in tr.points] == [
        (i, round(u, 9), round(v, 9)) for i, u, v in truth
    ]


def test_matches_brute_force_containment():
    rng = random.Random(2)
    for _ in range(20):
        pitch, balls = {}, {}
        for i in range(40):
            if rng.random() < 0.7:
                x0, y0 = rng.uniform(0, 0.4), rng.uniform(0, 0.4)
                pitch[i] = [Detection(0, BBoxNorm.from_corners(x0, y0, x0 + 0.5, y0 + 0.5), 0.9)]
            if rng.random() < 0.8:
                balls[i] = ball(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.1, 1))
        tr = build_trajectory(FrameDetections(pitch, balls), clip(5, 35), fps=10, pitch_gap_frames=2)
        expected = []
        for i in range(5, 36):
            recent = [j for j in range(i - 2, i + 1) if j in pitch]
            if not recent or i not in balls:
                continue
            px0, py0, px1, py1 = pitch[max(recent)][0].bbox.corners()
            b = balls[i][0].bbox
            if px0 <= b.cx <= px1 and py0 <= b.cy <= py1:
                expected.append(i)
        got = [p.frame_index for p in tr.points] if tr else []
        assert got == expected


def test_fps_must_be_positive():
    with pytest.raises(InvalidParameterError):
        build_trajectory(FrameDetections(), clip(0, 1), fps=0)


def test_missing_detection_dir(tmp_path):
    with pytest.raises(InvalidInputError):
        load_frame_detections(tmp_path / "nope")


# --- heatmap -------------------------------------------------------------


def test_heatmap_examples():
    hm = accumulate_heatmap([traj("a", [(0.5, 0.5)] * 4)])
    assert hm.counts.shape == (20, 10)
    assert hm.count(5, 10) == 4 and hm.total == 4
    assert point_bin(1.0, 1.0, 10, 20) == (9, 19)
    assert point_bin(0.0, 0.0, 10, 20) == (0, 0)
    hm = accumulate_heatmap([traj("a", [(0.1, 0.1)] * 3), traj("b", [(0.9, 0.9)] * 3)])
    assert hm.total == 6


@given(st.lists(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=20), max_size=8),
       st.integers(1, 12), st.integers(1, 25))
@settings(max_examples=60)
def test_heatmap_conservation(sets, nu, nv):
    trajs = [traj(f"c{i}", uvs) for i, uvs in enumerate(sets)]
    hm = accumulate_heatmap(trajs, nu, nv)
    assert hm.total == sum(len(uvs) for uvs in sets)
    assert (hm.counts >= 0).all()


def test_weak_zones():
    hm = Heatmap(10, 20)
    assert weak_zones(hm) == []
    hm.counts[3, 4] = 9
    hm.counts[7, 1] = 5
    hm.counts[2, 8] = 5
    hm.counts[2, 6] = 5
    zones = weak_zones(hm, k=3)
    assert [(z.bin_u, z.bin_v, z.count) for z in zones] == [(4, 3, 9), (6, 2, 5), (8, 2, 5)]
    assert zones[0].share == pytest.approx(9 / 24)
    assert len(weak_zones(hm, k=50)) == 4
    with pytest.raises(InvalidParameterError):
        weak_zones(hm, k=0)


def test_weak_zones_ignore_trajectory_order():
    rng = random.Random(9)
    trajs = [traj(f"c{i}", [(rng.random(), rng.random()) for _ in range(15)]) for i in range(6)]
    a = weak_zones(accumulate_heatmap(trajs), 5)
    b = weak_zones(accumulate_heatmap(list(reversed(trajs))), 5)
    assert a == b


# --- export --------------------------------------------------------------


def test_empty_exports():
    assert trajectories_csv([]) == "clip_label,frame_index,t,u,v,confidence\n"
    grid = heatmap_csv(Heatmap())
    rows = grid.splitlines()
    assert len(rows) == 20 and all(r == ",".join(["0"] * 10) for r in rows)


@given(st.lists(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=6), max_size=5))
def test_trajectory_csv_round_trip(sets):
    trajs = [traj(f"wicket_1_{i + 1}", uvs, t0=i * 3.7) for i, uvs in enumerate(sets)]
    assert parse_trajectories_csv(trajectories_csv(trajs)) == trajs


def test_heatmap_csv_round_trip_and_shape():
    hm = Heatmap(10, 20, np.arange(200, dtype=np.int64).reshape(20, 10))
    text = heatmap_csv(hm)
    rows = text.splitlines()
    assert len(rows) == 20 and all(len(r.split(",")) == 10 for r in rows)
    back = parse_heatmap_csv(text)
    assert (back.nu, back.nv) == (10, 20) and np.array_equal(back.counts, hm.counts)


def test_csv_parse_errors():
    with pytest.raises(ParseError):
        parse_trajectories_csv("a,b\n")
    with pytest.raises(ParseError) as exc:
        parse_trajectories_csv("clip_label,frame_index,t,u,v,confidence\nx,1,2,3\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        parse_heatmap_csv("1,2\n3\n")


def test_polyline_and_export(tmp_path):
    trajs = [traj("wicket_1_1", [(0.1, 0.2), (0.3, 0.4)]), traj("wicket_1_2", [(0.5, 0.6)])]
    text = trajectory_polyline(trajs)
    blocks = text.split("\n\n\n")
    assert len(blocks) == 2
    data = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    assert data[0] == ["0.1", "0.2", "0.0"]
    hm = accumulate_heatmap(trajs)
    paths = export_plot_data(trajs, hm, tmp_path / "run")
    assert parse_trajectories_csv(paths["trajectories"].read_text()) == trajs
    assert parse_heatmap_csv(paths["heatmap"].read_text()).total == 3
    assert paths["polyline"].read_text() == text
