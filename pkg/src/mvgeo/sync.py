"""Frame synchronization from traffic-light change events.

The yellow->red transition is the synchronization signal; green->yellow is
matched too but only reported as a residual check. Offsets are constant per
recording: aligned_frame = frame - offset[camera].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import NoMatchedEvents

logger = logging.getLogger(__name__)

GREEN, YELLOW, RED, UNKNOWN = "green", "yellow", "red", "unknown"
_STATES = (GREEN, YELLOW, RED, UNKNOWN)
_CYCLE_NEXT = {GREEN: YELLOW, YELLOW: RED, RED: GREEN}
_TRACKED_TRANSITIONS = ((GREEN, YELLOW), (YELLOW, RED))

# Dominant-channel classification: the top channel must beat the others by
# this ratio; red and yellow are split on how much green accompanies red.
_DOMINANCE_RATIO = 1.5
_YELLOW_GREEN_RATIO = 0.5
DEFAULT_WINDOW = 25


@dataclass(frozen=True)
class LightTimeline:
    camera_id: str
    states: tuple[tuple[int, str], ...]

    def __post_init__(self):
        states = tuple((int(f), str(s)) for f, s in self.states)
        frames = [f for f, _ in states]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("timeline frames must be strictly increasing")
        for _, s in states:
            if s not in _STATES:
                raise ValueError(f"unknown light state {s!r}")
        known = [s for _, s in states if s != UNKNOWN]
        for a, b in zip(known, known[1:]):
            if a != b and _CYCLE_NEXT[a] != b:
                logger.warning("timeline %s violates the light cycle: %s -> %s",
                               self.camera_id, a, b)
        object.__setattr__(self, "states", states)


@dataclass(frozen=True)
class ChangeEvent:
    camera_id: str
    frame: int
    transition: tuple[str, str]


@dataclass(frozen=True)
class FrameOffsetMap:
    reference: str
    offsets: dict[str, int]

    def __post_init__(self):
        if self.offsets.get(self.reference, 0) != 0:
            raise ValueError("reference camera must have offset 0")


def classify_light_state(mean_rgb) -> str:
    """Classify a mean RGB triple from a traffic-light region."""
    r, g, b = (float(v) for v in mean_rgb)
    if not all(math.isfinite(v) for v in (r, g, b)):
        raise ValueError("rgb values must be finite")
    if g >= _DOMINANCE_RATIO * r and g >= _DOMINANCE_RATIO * b:
        return GREEN
    if r >= _DOMINANCE_RATIO * b:
        return YELLOW if g >= _YELLOW_GREEN_RATIO * r else RED
    return UNKNOWN


def extract_events(timeline: LightTimeline) -> list[ChangeEvent]:
    """Tracked state-change events (green->yellow, yellow->red).

    Unknown states are bridged: a -> unknown -> b collapses to a -> b at
    b's frame.
    """
    events = []
    prev_state = None
    for frame, state in timeline.states:
        if state == UNKNOWN:
            continue
        if prev_state is not None and state != prev_state:
            if (prev_state, state) in _TRACKED_TRANSITIONS:
                events.append(ChangeEvent(
                    camera_id=timeline.camera_id, frame=frame,
                    transition=(prev_state, state)))
        prev_state = state
    return events


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _median(values: list[int]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def _matched_differences(cam_events: list[int], ref_events: list[int],
                         window: int) -> list[int]:
    diffs = []
    for f in cam_events:
        nearest = min(ref_events, key=lambda r: (abs(f - r), r), default=None)
        if nearest is not None and abs(f - nearest) <= window:
            diffs.append(f - nearest)
    return diffs


def estimate_offsets(events: dict[str, list[ChangeEvent]], reference: str,
                     window: int = DEFAULT_WINDOW,
                     ) -> tuple[FrameOffsetMap, dict[str, float | None]]:
    """Estimate per-camera frame offsets relative to a reference camera.

    Each yellow->red event is matched to the nearest reference yellow->red
    event within +-window; the offset is the rounded median of the frame
    differences (ties rounded away from zero). Green->yellow events are
    matched the same way; the difference between their median and the
    offset is returned as a residual diagnostic per camera.

    Raises NoMatchedEvents when a camera has no yellow->red event within
    the window of any reference event.
    """
    if reference not in events:
        raise ValueError(f"reference camera {reference!r} has no events")

    def frames_of(cam: str, transition) -> list[int]:
        return [e.frame for e in events[cam] if e.transition == transition]

    ref_sync = frames_of(reference, (YELLOW, RED))
    ref_measure = frames_of(reference, (GREEN, YELLOW))
    if not ref_sync:
        raise NoMatchedEvents(f"reference {reference!r} has no yellow->red events")

    offsets: dict[str, int] = {}
    residuals: dict[str, float | None] = {}
    for cam in events:
        if cam == reference:
            offsets[cam] = 0
            residuals[cam] = 0.0
            continue
        diffs = _matched_differences(frames_of(cam, (YELLOW, RED)), ref_sync, window)
        if not diffs:
            raise NoMatchedEvents(
                f"camera {cam!r} has no yellow->red event within "
                f"{window} frames of a reference event")
        offsets[cam] = _round_half_away(_median(diffs))
        measure_diffs = _matched_differences(
            frames_of(cam, (GREEN, YELLOW)), ref_measure, window)
        residuals[cam] = (_median(measure_diffs) - offsets[cam]
                          if measure_diffs else None)
    return FrameOffsetMap(reference=reference, offsets=offsets), residuals


def apply_offsets(frame_index: int, offsets: FrameOffsetMap, camera_id: str) -> int:
    """Re-index a camera frame into the reference timeline. Negative results
    mean the frame precedes the synchronized start and is dropped."""
    return frame_index - offsets.offsets[camera_id]
