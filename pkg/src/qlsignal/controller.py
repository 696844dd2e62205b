"""Two-phase fully-actuated controller and the queue-length adaptive max green.

Timers are integer tick counts so that comparisons against gmin, gap-out and
the max-green countdown are exact at any time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

from .core import MAJOR, MINOR, ActuatedParams, AdaptiveParams

MIN_GREEN = "min_green"
EXTENSION_GREEN = "extension_green"
YELLOW = "yellow"
ALL_RED = "all_red"
GREEN_STAGES = (MIN_GREEN, EXTENSION_GREEN)

GREEN, AMBER, RED = "green", "yellow", "red"


class PhaseState(NamedTuple):
    """Controller state; every timer is in ticks of the engine time step.

    ``max_green_remaining`` is ``None`` from green onset until the first green
    tick arms it with the max green that applies to this green.
    """

    active_approach: str = MAJOR
    stage: str = MIN_GREEN
    stage_elapsed: int = 0
    green_elapsed: int = 0
    max_green_remaining: Optional[int] = None
    last_actuation_gap: int = 0

    @property
    def is_green(self) -> bool:
        return self.stage in GREEN_STAGES


class DetectorInput(NamedTuple):
    call_major: bool = False
    call_minor: bool = False
    actuation_major: bool = False
    actuation_minor: bool = False


class SignalIndication(NamedTuple):
    major: str
    minor: str
    max_out: bool = False
    gap_out: bool = False


@dataclass(frozen=True)
class QueueSnapshot:
    """End-of-red queue counts (vehicles) for cycle ``cycle_index``."""

    n_major: int
    n_minor: int
    cycle_index: int = 0


class _Ticks(NamedTuple):
    gmin_major: int
    gmin_minor: int
    yellow: int
    all_red: int
    gap_out: int


@lru_cache(maxsize=64)
def _ticks(params: ActuatedParams, dt: float) -> _Ticks:
    return _Ticks(
        round(params.gmin_major / dt), round(params.gmin_minor / dt),
        round(params.yellow / dt), round(params.all_red / dt), round(params.gap_out / dt),
    )


def seconds_to_ticks_ceil(seconds: float, dt: float) -> int:
    return int(math.ceil(seconds / dt - 1e-9))


def _indication(approach: str, stage: str, max_out=False, gap_out=False) -> SignalIndication:
    if stage in GREEN_STAGES:
        shown = GREEN
    elif stage == YELLOW:
        shown = AMBER
    else:
        shown = RED
    if approach == MAJOR:
        return SignalIndication(shown, RED, max_out, gap_out)
    return SignalIndication(RED, shown, max_out, gap_out)


_STEADY = {(a, s): _indication(a, s) for a in (MAJOR, MINOR)
           for s in (MIN_GREEN, EXTENSION_GREEN, YELLOW, ALL_RED)}


def indication_for(state: PhaseState) -> SignalIndication:
    return _STEADY[state.active_approach, state.stage]


def controller_step(state: PhaseState, detectors: DetectorInput, params: ActuatedParams,
                    gmax_active: float, dt: float) -> tuple[PhaseState, SignalIndication]:
    """Advance the controller by one tick given this tick's detector input.

    Returns the state and indication that hold for the next tick. Green is
    held for gmin, then extended while actuations arrive within gap_out. The
    max-green countdown only runs while the conflicting approach calls; with
    no conflicting call the green rests indefinitely.
    """
    ticks = _ticks(params, dt)
    approach, stage = state.active_approach, state.stage

    if stage in GREEN_STAGES:
        if approach == MAJOR:
            conflict, actuated, gmin = detectors.call_minor, detectors.actuation_major, ticks.gmin_major
        else:
            conflict, actuated, gmin = detectors.call_major, detectors.actuation_minor, ticks.gmin_minor
        green = state.green_elapsed + 1
        left = state.max_green_remaining
        if left is None:
            left = seconds_to_ticks_ceil(gmax_active, dt)
        if conflict and left > 0:
            left -= 1
        gap = 0 if actuated else state.last_actuation_gap + 1
        elapsed = state.stage_elapsed + 1
        if stage == MIN_GREEN and green >= gmin:
            stage, elapsed = EXTENSION_GREEN, 0
        if stage == EXTENSION_GREEN and conflict:
            if left == 0:
                return (PhaseState(approach, YELLOW, 0, green, left, gap),
                        _indication(approach, YELLOW, max_out=True))
            if gap >= ticks.gap_out:
                return (PhaseState(approach, YELLOW, 0, green, left, gap),
                        _indication(approach, YELLOW, gap_out=True))
        new = PhaseState(approach, stage, elapsed, green, left, gap)
        return new, _STEADY[approach, stage]

    elapsed = state.stage_elapsed + 1
    if stage == YELLOW:
        if elapsed >= ticks.yellow:
            new = state._replace(stage=ALL_RED, stage_elapsed=0)
            return new, _STEADY[approach, ALL_RED]
        return state._replace(stage_elapsed=elapsed), _STEADY[approach, YELLOW]

    if elapsed >= ticks.all_red:
        other = MINOR if approach == MAJOR else MAJOR
        new = PhaseState(other, MIN_GREEN, 0, 0, None, 0)
        return new, _STEADY[other, MIN_GREEN]
    return state._replace(stage_elapsed=elapsed), _STEADY[approach, ALL_RED]


def adaptive_max_green(n_own: float, n_conflict_prev: float, beta: float,
                       lb: float, ub: float) -> float:
    """Max green from the own queue and the conflicting queue of the previous cycle.

    ``max(lb, min(ub, beta * n_own**2 / (n_own + n_conflict_prev)))``, with
    the fraction taken as 0 when both queues are empty.
    """
    if n_own < 0 or n_conflict_prev < 0:
        raise ValueError("queue counts must be non-negative")
    if lb > ub:
        raise ValueError(f"lower bound {lb} exceeds upper bound {ub}")
    if not beta > 0 or not lb > 0:
        raise ValueError("beta and lb must be positive")
    total = n_own + n_conflict_prev
    share = beta * n_own * n_own / total if total > 0 else 0.0
    return max(lb, min(ub, share))


def cycle_max_green_update(snapshot_current: QueueSnapshot, snapshot_prev: QueueSnapshot,
                           adaptive: AdaptiveParams) -> tuple[float, float]:
    """Max greens for cycle k+1 from cycle k+1 own queues and cycle k conflicting queues."""
    gmax_major = adaptive_max_green(snapshot_current.n_major, snapshot_prev.n_minor,
                                    adaptive.beta, adaptive.lb_major, adaptive.ub)
    gmax_minor = adaptive_max_green(snapshot_current.n_minor, snapshot_prev.n_major,
                                    adaptive.beta, adaptive.lb_minor, adaptive.ub)
    return gmax_major, gmax_minor
