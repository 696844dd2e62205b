"""Discrete-time point-queue simulation of one two-phase actuated intersection.

Each approach is a FIFO vertical queue at the stop bar. During green the
head vehicle discharges once ``startup_lost_time`` has passed since green
onset and then every ``sat_headway`` seconds; a vehicle reaching an empty
queue whose discharge slot is open passes with zero delay.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .arrivals import ArrivalStream
from .controller import (
    ALL_RED, GREEN_STAGES, YELLOW, DetectorInput, PhaseState, adaptive_max_green,
    controller_step, indication_for,
)
from .core import APPROACHES, MAJOR, MINOR, ScenarioConfig, to_ticks
from .errors import OversaturationError
from .estimation.estimators import ProbeSnapshot, RedQueue, probe_snapshot


@dataclass
class CycleLog:
    """One cycle, delimited by consecutive major-green onsets.

    ``n_*`` are end-of-red queues (vehicles) and ``q_*`` residual queues at
    the end of the respective green.
    """

    cycle: int
    start: float
    green_major: float = 0.0
    green_minor: float = 0.0
    cycle_length: float = 0.0
    maxout_major: bool = False
    maxout_minor: bool = False
    n_major: int = 0
    n_minor: int = 0
    q_major: int = 0
    q_minor: int = 0
    gmax_major: float = 0.0
    gmax_minor: float = 0.0


CYCLE_COLUMNS = tuple(CycleLog.__dataclass_fields__)


@dataclass
class MetricsSummary:
    """Delay (s/veh), stops (per veh) and time-averaged queue (m).

    Overall values weight each approach by its vehicle count.
    """

    avg_delay: float = 0.0
    avg_delay_major: float = 0.0
    avg_delay_minor: float = 0.0
    n_stops: float = 0.0
    n_stops_major: float = 0.0
    n_stops_minor: float = 0.0
    avg_queue: float = 0.0
    avg_queue_major: float = 0.0
    avg_queue_minor: float = 0.0
    vehicles_major: int = 0
    vehicles_minor: int = 0
    departed_major: int = 0
    departed_minor: int = 0
    maxouts_major: int = 0
    maxouts_minor: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = tuple(MetricsSummary.__dataclass_fields__)


@dataclass
class VehicleRecords:
    """Per-vehicle outcome on one approach; ``departure`` is NaN for vehicles
    still queued at the horizon."""

    arrival: np.ndarray
    departure: np.ndarray
    stops: np.ndarray

    def delays(self, horizon: float) -> np.ndarray:
        end = np.where(np.isnan(self.departure), horizon, self.departure)
        return end - self.arrival

    @property
    def departed(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.departure)))


@dataclass
class SimulationResult:
    cycles: list
    summary: MetricsSummary
    probes: list
    red_queues: list
    vehicles: dict
    queue_seconds: dict
    horizon: float
    approach_stats: dict = field(default_factory=dict)


def summarize(cycle_logs, vehicles: dict, queue_seconds: dict, horizon: float,
              queue_spacing: float = 7.5) -> MetricsSummary:
    """Aggregate per-vehicle records and queue integrals (vehicle-seconds)."""
    out = MetricsSummary()
    counts, delay, stops, queue = {}, {}, {}, {}
    for ap in APPROACHES:
        rec = vehicles.get(ap)
        n = 0 if rec is None else rec.arrival.size
        counts[ap] = n
        delay[ap] = float(rec.delays(horizon).mean()) if n else 0.0
        stops[ap] = float(rec.stops.mean()) if n else 0.0
        queue[ap] = queue_seconds.get(ap, 0.0) / horizon * queue_spacing if horizon > 0 else 0.0
        setattr(out, f"avg_delay_{ap}", delay[ap])
        setattr(out, f"n_stops_{ap}", stops[ap])
        setattr(out, f"avg_queue_{ap}", queue[ap])
        setattr(out, f"vehicles_{ap}", n)
        setattr(out, f"departed_{ap}", 0 if rec is None else rec.departed)
    total = counts[MAJOR] + counts[MINOR]
    if total:
        w = {ap: counts[ap] / total for ap in APPROACHES}
        out.avg_delay = sum(w[ap] * delay[ap] for ap in APPROACHES)
        out.n_stops = sum(w[ap] * stops[ap] for ap in APPROACHES)
        out.avg_queue = sum(w[ap] * queue[ap] for ap in APPROACHES)
    out.maxouts_major = sum(1 for c in cycle_logs if c.maxout_major)
    out.maxouts_minor = sum(1 for c in cycle_logs if c.maxout_minor)
    return out


def improvement(typical: float, ql_based: float) -> float:
    """Percent improvement of the queue-length method over typical actuated."""
    if typical == 0:
        return 0.0 if ql_based == 0 else -math.inf
    return 100.0 * (typical - ql_based) / typical


def _secs(ticks: int, dt: float) -> float:
    """Tick count to seconds without accumulated float noise."""
    return round(ticks * dt, 9)


class _Approach:
    __slots__ = ("name", "ticks", "times", "probe", "ptr", "queue", "next_slot",
                 "departure", "stops", "area", "red_onset", "snapshots")

    def __init__(self, name, stream: ArrivalStream, dt):
        self.name = name
        self.times = stream.times
        self.probe = stream.is_probe
        self.ticks = np.floor(stream.times / dt + 1e-9).astype(np.int64).tolist()
        self.ptr = 0
        self.queue = deque()
        self.next_slot = 0
        self.departure = np.full(stream.times.size, np.nan)
        self.stops = np.zeros(stream.times.size, dtype=np.int64)
        self.area = 0
        self.red_onset = 0
        self.snapshots = []   # end-of-red queue length per cycle


def simulate(scenario: ScenarioConfig, stream_major: ArrivalStream, stream_minor: ArrivalStream,
             trace: Optional[Callable] = None) -> SimulationResult:
    """Run one replication; both control types share this loop.

    ``trace`` (optional) is called after every tick as
    ``trace(time, indication, n_major, n_minor)``.
    """
    dt = scenario.time_step
    params = scenario.actuated
    adaptive = scenario.adaptive
    ql = scenario.control_type == "ql_based"
    n_ticks = to_ticks(scenario.horizon, dt)
    headway = to_ticks(scenario.sat_headway, dt)
    startup = to_ticks(scenario.startup_lost_time, dt)
    cap = scenario.queue_cap
    probes_on = scenario.probe_rate is not None

    lanes = {MAJOR: _Approach(MAJOR, stream_major, dt), MINOR: _Approach(MINOR, stream_minor, dt)}
    major, minor = lanes[MAJOR], lanes[MINOR]
    state = PhaseState()
    gmax = {MAJOR: params.gmax_major, MINOR: params.gmax_minor}
    cycles: list[CycleLog] = []
    probes: list[ProbeSnapshot] = []
    red_queues: list[RedQueue] = []

    def begin_green(ap: _Approach, tick: int):
        """End of red for ``ap``: snapshot, max green, discharge clock."""
        other = minor if ap is major else major
        n_now = len(ap.queue)
        if ap is major:
            cycle = len(cycles)
            if cycles:
                cycles[-1].cycle_length = _secs(tick, dt) - cycles[-1].start
            cycles.append(CycleLog(cycle=cycle, start=_secs(tick, dt), n_major=n_now))
            # conflicting queue of the previous cycle
            n_conflict = other.snapshots[cycle - 1] if cycle >= 1 and len(other.snapshots) >= cycle else 0
        else:
            cycle = len(cycles) - 1
            cycles[-1].n_minor = n_now
            n_conflict = other.snapshots[cycle - 1] if cycle >= 1 else 0
        ap.snapshots.append(n_now)
        if ql:
            gmax[ap.name] = adaptive_max_green(n_now, n_conflict, adaptive.beta,
                                               adaptive.lb(ap.name), adaptive.ub)
        setattr(cycles[-1], f"gmax_{ap.name}", gmax[ap.name])
        if tick > 0:
            R = _secs(tick - ap.red_onset, dt)
            onset = _secs(ap.red_onset, dt)
            ids = tuple(ap.queue)
            offsets = tuple(float(ap.times[v]) - onset for v in ids)
            residual = sum(1 for o in offsets if o < 0)
            red_queues.append(RedQueue(cycle, ap.name, R, ids, offsets))
            if probes_on:
                probes.append(probe_snapshot([ap.times[v] for v in ids], [ap.probe[v] for v in ids],
                                             onset, R, cycle, ap.name, residual))
        ap.next_slot = tick + startup

    def end_green(ap: _Approach, green_ticks: int, max_out: bool):
        log = cycles[-1]
        setattr(log, f"green_{ap.name}", _secs(green_ticks, dt))
        setattr(log, f"maxout_{ap.name}", max_out)
        setattr(log, f"q_{ap.name}", len(ap.queue))
        # residual vehicles advanced during green and stop again
        for v in ap.queue:
            ap.stops[v] += 1

    begin_green(major, 0)
    for n in range(n_ticks):
        now = n * dt
        green_name = state.active_approach if state.stage in GREEN_STAGES else None
        flags = []
        for ap in (major, minor):
            arrived = departed = False
            queue = ap.queue
            ticks = ap.ticks
            is_green = green_name == ap.name
            while ap.ptr < len(ticks) and ticks[ap.ptr] == n:
                v = ap.ptr
                if queue or not is_green:
                    ap.stops[v] += 1
                queue.append(v)
                ap.ptr += 1
                arrived = True
            if is_green and queue and n >= ap.next_slot:
                v = queue.popleft()
                a = ap.times[v]
                ap.departure[v] = a if a > now else now
                ap.next_slot = n + headway
                departed = True
            size = len(queue)
            if size > cap:
                raise OversaturationError(ap.name, now, size, cap)
            ap.area += size
            flags.append((size > 0 or arrived, departed or arrived))
        detectors = DetectorInput(flags[0][0], flags[1][0], flags[0][1], flags[1][1])
        new_state, indication = controller_step(state, detectors, params,
                                                gmax[state.active_approach], dt)
        if new_state.stage != state.stage:
            lane = lanes[state.active_approach]
            if state.stage in GREEN_STAGES and new_state.stage == YELLOW:
                end_green(lane, new_state.green_elapsed, indication.max_out)
            elif state.stage == YELLOW:
                lane.red_onset = n + 1
            elif state.stage == ALL_RED:
                begin_green(lanes[new_state.active_approach], n + 1)
        state = new_state
        if trace is not None:
            trace(now, indication_for(state), len(major.queue), len(minor.queue))

    if cycles and cycles[-1].cycle_length == 0.0:
        cycles.pop()  # incomplete at the horizon

    vehicles = {
        ap.name: VehicleRecords(np.asarray(ap.times, dtype=float), ap.departure, ap.stops)
        for ap in (major, minor)
    }
    queue_seconds = {ap.name: ap.area * dt for ap in (major, minor)}
    summary = summarize(cycles, vehicles, queue_seconds, scenario.horizon, scenario.queue_spacing)
    return SimulationResult(
        cycles=cycles, summary=summary, probes=probes, red_queues=red_queues,
        vehicles=vehicles, queue_seconds=queue_seconds, horizon=scenario.horizon,
        approach_stats=_approach_stats(scenario, cycles, vehicles),
    )


def _approach_stats(scenario, cycles, vehicles) -> dict:
    """Mean arrival rate (veh/s), cycle length (s), capacity (veh/cycle) and
    degree of saturation per approach, for the estimation harness."""
    out = {}
    mean_cycle = float(np.mean([c.cycle_length for c in cycles])) if cycles else 0.0
    for ap in APPROACHES:
        lam = vehicles[ap].arrival.size / scenario.horizon
        greens = [getattr(c, f"green_{ap}") for c in cycles]
        effective = np.mean(greens) - scenario.startup_lost_time if greens else 0.0
        X = max(effective, 0.0) / scenario.sat_headway + (1 if greens else 0)
        rho = lam * mean_cycle / X if X > 0 else 0.0
        out[ap] = dict(arrival_rate=float(lam), C=mean_cycle, X=float(X), rho=float(rho))
    return out
