"""Scoreboard text parsing and the debounced score tracker.

A broadcast scorecard shows runs and wickets joined by ``-`` or ``/`` in
either order ("120-3", "3/120").  :func:`parse_score` pulls the first such
token out of OCR text and decides which number is which; the tracker turns a
stream of noisy readings into wicket events.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional

from .errors import InvalidParameterError, SequencingError

WICKETS_FIRST = "wickets_first"
RUNS_FIRST = "runs_first"
AUTO = "auto"
FORMATS = (WICKETS_FIRST, RUNS_FIRST, AUTO)

MAX_WICKETS = 10
MAX_RUNS = 1999

# leftmost <int><sep><int>; the lookbehind keeps "12.4-5" from matching "4-5"
_SCORE_RE = re.compile(r"(?<![\d.])(\d+)\s*([-/])\s*(\d+)")


@dataclass(frozen=True)
class ScoreReading:
    runs: int
    wickets: int
    separator: str = "-"
    format: str = RUNS_FIRST
    source_text: str = ""
    t: float = 0.0
    frame_index: int = 0

    @property
    def score(self) -> tuple[int, int]:
        return self.runs, self.wickets


@dataclass(frozen=True)
class WicketEvent:
    t: float
    frame_index: int
    wickets_before: int
    wickets_after: int
    runs_at_event: int
    innings_index: int = 0


def check_policy(policy: str) -> str:
    if policy not in FORMATS:
        raise InvalidParameterError(f"unknown score format {policy!r}; expected one of {FORMATS}")
    return policy


def _plausible(runs: int, wickets: int) -> bool:
    return 0 <= wickets <= MAX_WICKETS and 0 <= runs <= MAX_RUNS


def _follows(prev: ScoreReading, runs: int, wickets: int, max_step: int = 2) -> bool:
    return runs >= prev.runs and prev.wickets <= wickets <= prev.wickets + max_step


def disambiguate(a: int, b: int, policy: str = AUTO, prev: Optional[ScoreReading] = None):
    """Assign the pair ``a<sep>b`` to (runs, wickets), or return None.

    Returns ``(runs, wickets, format)``.  An assignment is plausible when the
    wicket side is at most 10 and the run side at most 1999.  A single
    plausible reading always wins.  When both are plausible, a fixed policy
    decides; under ``auto`` the previous reading decides, and anything still
    ambiguous is rejected.
    """
    check_policy(policy)
    candidates = {}
    if _plausible(a, b):
        candidates[RUNS_FIRST] = (a, b)
    if _plausible(b, a):
        candidates[WICKETS_FIRST] = (b, a)
    if not candidates:
        return None
    if len(candidates) == 1 or a == b:
        fmt, (runs, wickets) = next(iter(candidates.items()))
        if a == b and policy != AUTO:
            fmt = policy
        return runs, wickets, fmt
    if policy != AUTO:
        runs, wickets = candidates[policy]
        return runs, wickets, policy
    if prev is None:
        return None
    consistent = [(fmt, rw) for fmt, rw in candidates.items() if _follows(prev, *rw)]
    if len(consistent) != 1:
        return None
    fmt, (runs, wickets) = consistent[0]
    return runs, wickets, fmt


def parse_score(
    text: str,
    policy: str = AUTO,
    prev: Optional[ScoreReading] = None,
    t: float = 0.0,
    frame_index: int = 0,
) -> Optional[ScoreReading]:
    m = _SCORE_RE.search(text or "")
    if m is None:
        return None
    a, sep, b = int(m.group(1)), m.group(2), int(m.group(3))
    res = disambiguate(a, b, policy, prev)
    if res is None:
        return None
    runs, wickets, fmt = res
    return ScoreReading(runs, wickets, sep, fmt, text, t, frame_index)


def format_score(runs: int, wickets: int, separator: str = "-", order: str = RUNS_FIRST) -> str:
    if order == WICKETS_FIRST:
        return f"{wickets}{separator}{runs}"
    return f"{runs}{separator}{wickets}"


def detect_innings_reset(
    prev: ScoreReading, nxt: ScoreReading, run_drop: int = 20, wicket_drop: int = 2
) -> bool:
    return nxt.runs <= prev.runs - run_drop or (
        nxt.wickets <= prev.wickets - wicket_drop and nxt.runs < prev.runs
    )


@dataclass(frozen=True)
class TrackerConfig:
    debounce: int = 2
    max_wicket_jump: int = 2
    reset_run_drop: int = 20
    reset_wicket_drop: int = 2

    def __post_init__(self):
        if self.debounce < 1:
            raise InvalidParameterError("debounce must be >= 1")
        if self.max_wicket_jump < 1:
            raise InvalidParameterError("max_wicket_jump must be >= 1")


@dataclass(frozen=True)
class ScoreTrackerState:
    accepted: Optional[ScoreReading] = None
    candidate: Optional[ScoreReading] = None  # first reading of the pending streak
    count: int = 0
    innings_index: int = 0
    last_t: float = float("-inf")
    config: TrackerConfig = TrackerConfig()


# tracker decisions, recorded in the segmentation score log
PENDING = "pending"
ACCEPTED = "accepted"
INITIAL = "initial"
INNINGS_RESET = "innings_reset"
REJECTED = "rejected"
UNCHANGED = "unchanged"
NO_READING = "no_reading"


def tracker_step(state: ScoreTrackerState, reading: Optional[ScoreReading]):
    """Advance the tracker by one sampled frame.

    Returns ``(new_state, events, decision)``.  ``reading`` may be None for a
    frame whose text did not parse; such frames are skipped without
    breaking a pending streak.
    """
    if reading is None:
        return state, [], NO_READING
    if reading.t < state.last_t:
        raise SequencingError(f"reading at t={reading.t} arrived after t={state.last_t}")
    state = replace(state, last_t=reading.t)
    cfg = state.config

    if state.accepted is not None and reading.score == state.accepted.score:
        return replace(state, candidate=None, count=0), [], UNCHANGED

    if state.candidate is not None and reading.score == state.candidate.score:
        count = state.count + 1
        first = state.candidate
    else:
        count = 1
        first = reading
    if count < cfg.debounce:
        return replace(state, candidate=first, count=count), [], PENDING

    state = replace(state, candidate=None, count=0)
    prev = state.accepted
    if prev is None:
        return replace(state, accepted=first), [], INITIAL
    if detect_innings_reset(prev, first, cfg.reset_run_drop, cfg.reset_wicket_drop):
        return (
            replace(state, accepted=first, innings_index=state.innings_index + 1),
            [],
            INNINGS_RESET,
        )
    d = first.wickets - prev.wickets
    if first.runs < prev.runs or d < 0 or d > cfg.max_wicket_jump:
        return state, [], REJECTED
    events = [
        WicketEvent(
            t=first.t,
            frame_index=first.frame_index,
            wickets_before=w,
            wickets_after=w + 1,
            runs_at_event=first.runs,
            innings_index=state.innings_index,
        )
        for w in range(prev.wickets, first.wickets)
    ]
    return replace(state, accepted=first), events, ACCEPTED


def tracker_update(state: ScoreTrackerState, reading: Optional[ScoreReading]):
    """Pure single-step update returning ``(new_state, events)``."""
    new_state, events, _ = tracker_step(state, reading)
    return new_state, events


class ScoreTracker:
    """Stateful wrapper around :func:`tracker_step` for a single consumer."""

    def __init__(self, config: TrackerConfig | None = None):
        self.state = ScoreTrackerState(config=config or TrackerConfig())
        self.events: list[WicketEvent] = []
        self.last_decision = None

    def update(self, reading: Optional[ScoreReading]) -> list[WicketEvent]:
        self.state, events, self.last_decision = tracker_step(self.state, reading)
        self.events.extend(events)
        return events

    @property
    def accepted(self) -> Optional[ScoreReading]:
        return self.state.accepted
