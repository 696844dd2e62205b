"""Arrival-time generation: piecewise Poisson, upstream-signal platoons, probe tagging."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MAJOR, MINOR, DemandProfile, ScenarioConfig, UpstreamSignal
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class ArrivalStream:
    """Time-ordered arrivals on one approach; vehicle ids are array positions."""

    times: np.ndarray
    is_probe: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        probe = np.asarray(self.is_probe, dtype=bool)
        if times.shape != probe.shape or times.ndim != 1:
            raise ValueError("times and is_probe must be 1-d arrays of equal length")
        if times.size and np.any(np.diff(times) < 0):
            raise ValueError("arrival times must be nondecreasing")
        times.setflags(write=False)
        probe.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "is_probe", probe)

    @classmethod
    def empty(cls) -> "ArrivalStream":
        return cls(np.empty(0), np.empty(0, dtype=bool))

    def __len__(self):
        return self.times.size

    @property
    def vehicle_ids(self) -> np.ndarray:
        return np.arange(self.times.size)

    @property
    def events(self) -> list[tuple[float, bool, int]]:
        return [(float(t), bool(p), i) for i, (t, p) in enumerate(zip(self.times, self.is_probe))]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.times.astype("<f8").tobytes())
        h.update(self.is_probe.astype("u1").tobytes())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arrival_time", "is_probe", "vehicle_id"])
            for t, p, i in self.events:
                writer.writerow([repr(t), int(p), i])

    @classmethod
    def from_csv(cls, path) -> "ArrivalStream":
        times, probe = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                times.append(float(row["arrival_time"]))
                probe.append(row["is_probe"] in ("1", "True", "true"))
        return cls(np.array(times), np.array(probe, dtype=bool))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def poisson_arrivals(demand: DemandProfile, approach: str, scale: float = 1.0,
                     horizon: float | None = None, seed=None) -> ArrivalStream:
    """Nonhomogeneous Poisson arrivals with a piecewise-constant rate.

    Each gap is drawn as a unit-rate exponential and consumed against the
    integrated rate, so a gap that straddles an interval boundary carries its
    unused remainder into the next interval instead of being redrawn.
    """
    rng = _rng(seed)
    horizon = demand.total_duration if horizon is None else horizon
    times = []
    residual = rng.exponential()
    start = 0.0
    for iv in demand.intervals:
        end = min(start + iv.duration, horizon)
        rate = iv.rate(approach) * scale / 3600.0
        if rate > 0:
            t = start
            while True:
                t_next = t + residual / rate
                if t_next >= end:
                    residual -= (end - t) * rate
                    break
                times.append(t_next)
                t = t_next
                residual = rng.exponential()
        start += iv.duration
        if start >= horizon:
            break
    return ArrivalStream(np.array(times), np.zeros(len(times), dtype=bool))


def _truncated_normal(rng, sd, size, bound=3.0):
    if sd == 0 or size == 0:
        return np.zeros(size)
    out = rng.normal(0.0, sd, size)
    bad = np.abs(out) > bound * sd
    while bad.any():
        out[bad] = rng.normal(0.0, sd, bad.sum())
        bad = np.abs(out) > bound * sd
    return out


def upstream_departures(origin_times: np.ndarray, upstream: UpstreamSignal,
                        sat_headway: float) -> np.ndarray:
    """FIFO point-queue service of ``origin_times`` by the upstream fixed-time signal."""
    headway = sat_headway / upstream.lanes
    cycle, green, offset = upstream.cycle, upstream.green_major, upstream.offset
    out = np.empty_like(origin_times)
    prev = -np.inf
    for k, a in enumerate(origin_times):
        d = max(a, prev + headway)
        phase = (d - offset) % cycle
        if phase >= green:
            d += cycle - phase
        out[k] = d
        prev = d
    return out


def platoon_arrivals(demand: DemandProfile, scale: float, upstream: UpstreamSignal,
                     horizon: float | None = None, seed=None,
                     sat_headway: float = 2.0) -> ArrivalStream:
    """Major-street arrivals shaped by a fixed-time signal upstream.

    Vehicles enter as Poisson at the origin, queue at the upstream signal,
    discharge during its green and reach the stop bar after the link travel
    time plus truncated-normal jitter (clipped at three standard deviations,
    then re-sorted).
    """
    upstream.validate()
    horizon = demand.total_duration if horizon is None else horizon
    peak = demand.peak_rate(MAJOR) * scale
    capacity = upstream.capacity_vph(sat_headway)
    if peak > capacity:
        raise ValidationError(
            "upstream", f"capacity {capacity:.0f} vph is below scaled peak demand {peak:.0f} vph")
    rng = _rng(seed)
    origin = poisson_arrivals(demand, MAJOR, scale, horizon, rng).times
    departures = upstream_departures(origin, upstream, sat_headway)
    arrive = departures + upstream.travel_time + _truncated_normal(rng, upstream.jitter_sd, origin.size)
    arrive = np.sort(arrive)
    arrive = arrive[arrive < horizon]
    return ArrivalStream(arrive, np.zeros(arrive.size, dtype=bool))


def probe_tag(stream: ArrivalStream, p: float, seed=None) -> ArrivalStream:
    """Mark each vehicle as a connected probe independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"penetration must lie in [0, 1], got {p}")
    draws = _rng(seed).random(len(stream))
    return ArrivalStream(stream.times, draws < p)


def scenario_streams(scenario: ScenarioConfig, seed: int) -> tuple[ArrivalStream, ArrivalStream]:
    """Major and minor arrival streams of one replication.

    Each stream draws from its own child generator of ``seed`` so that the
    minor stream is unchanged when only the major arrival type changes.
    Probes are tagged when ``scenario.probe_rate`` is set.
    """
    demand = scenario.demand
    if scenario.arrival_type == "platoon":
        major = platoon_arrivals(demand, scenario.demand_scale_major, scenario.upstream,
                                 scenario.horizon, (seed, 0), scenario.sat_headway)
    else:
        major = poisson_arrivals(demand, MAJOR, scenario.demand_scale_major, scenario.horizon, (seed, 0))
    minor = poisson_arrivals(demand, MINOR, scenario.demand_scale_minor, scenario.horizon, (seed, 1))
    if scenario.probe_rate is not None:
        major = probe_tag(major, scenario.probe_rate, (seed, 2))
        minor = probe_tag(minor, scenario.probe_rate, (seed, 3))
    return major, minor
