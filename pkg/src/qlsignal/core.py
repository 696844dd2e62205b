"""Scenario data model, validation, YAML scenario files and replication seeding.

A scenario file is a YAML mapping. Times are in seconds, rates in vehicles
per hour, distances in meters::

    horizon: 3600            # s, must equal the summed demand durations
    time_step: 0.1           # s, engine tick; must divide every timer below
    seed: 20200101           # base seed, replications derive from it
    replications: 30
    arrival_type: random     # random | platoon
    control_type: ql_based   # typical_actuated | ql_based
    demand:                  # piecewise-constant, vph
      - {duration: 900, major: 800, minor: 300}
    demand_scale: {major: 1.2, minor: 1.2}
    actuated: {gmin_major: 10, gmin_minor: 5, gmax_major: 75, gmax_minor: 15,
               yellow: 2, all_red: 1, gap_out: 3}
    adaptive: {beta: 2.5, lb_major: 55, lb_minor: 10, ub: 300}   # ql_based only
    upstream: {cycle: 92, green_major: 60, distance: 650,       # platoon only
               travel_speed: 13.9, jitter_sd: 2.0, lanes: 2}
    sat_headway: 2.0         # s/veh at the stop bar
    startup_lost_time: 1.0   # s from green onset to the first discharge
    queue_spacing: 7.5       # m/veh, converts queued vehicles to meters
    queue_cap: 500           # veh, divergence guard
    probe_rate: 0.5          # optional connected-vehicle penetration
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .errors import ScenarioParseError, ValidationError

MAJOR = "major"
MINOR = "minor"
APPROACHES = (MAJOR, MINOR)

ARRIVAL_TYPES = ("random", "platoon")
CONTROL_TYPES = ("typical_actuated", "ql_based")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DemandInterval:
    duration: float
    major: float
    minor: float

    def rate(self, approach: str) -> float:
        return self.major if approach == MAJOR else self.minor


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant hourly volumes per approach."""

    intervals: tuple[DemandInterval, ...]

    @classmethod
    def from_rows(cls, rows) -> "DemandProfile":
        return cls(tuple(DemandInterval(float(d), float(a), float(b)) for d, a, b in rows))

    @property
    def total_duration(self) -> float:
        return sum(iv.duration for iv in self.intervals)

    def scaled(self, major: float = 1.0, minor: float = 1.0) -> "DemandProfile":
        return DemandProfile(
            tuple(
                DemandInterval(iv.duration, iv.major * major, iv.minor * minor)
                for iv in self.intervals
            )
        )

    def rate_at(self, t: float, approach: str) -> float:
        """Hourly rate in effect at time ``t`` (intervals are half-open)."""
        start = 0.0
        for iv in self.intervals:
            if start <= t < start + iv.duration:
                return iv.rate(approach)
            start += iv.duration
        return 0.0

    def peak_rate(self, approach: str) -> float:
        return max((iv.rate(approach) for iv in self.intervals), default=0.0)

    def validate(self, prefix: str = "demand") -> None:
        if not self.intervals:
            raise ValidationError(prefix, "at least one interval is required")
        for k, iv in enumerate(self.intervals):
            if not iv.duration > 0:
                raise ValidationError(f"{prefix}[{k}].duration", "must be > 0")
            for name in APPROACHES:
                if iv.rate(name) < 0:
                    raise ValidationError(f"{prefix}[{k}].{name}", "rate must be >= 0")


@dataclass(frozen=True)
class ActuatedParams:
    gmin_major: float = 10.0
    gmin_minor: float = 5.0
    gmax_major: float = 75.0
    gmax_minor: float = 15.0
    yellow: float = 2.0
    all_red: float = 1.0
    gap_out: float = 3.0

    def gmin(self, approach: str) -> float:
        return self.gmin_major if approach == MAJOR else self.gmin_minor

    def gmax(self, approach: str) -> float:
        return self.gmax_major if approach == MAJOR else self.gmax_minor

    def validate(self, prefix: str = "actuated") -> None:
        for name in ("gmin_major", "gmin_minor", "yellow", "all_red", "gap_out"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{prefix}.{name}", "must be > 0")
        if self.gmax_major < self.gmin_major:
            raise ValidationError(f"{prefix}.gmax_major", "must be >= gmin_major")
        if self.gmax_minor < self.gmin_minor:
            raise ValidationError(f"{prefix}.gmax_minor", "must be >= gmin_minor")


@dataclass(frozen=True)
class AdaptiveParams:
    beta: float = 2.5
    lb_major: float = 55.0
    lb_minor: float = 10.0
    ub: float = 300.0

    def lb(self, approach: str) -> float:
        return self.lb_major if approach == MAJOR else self.lb_minor

    def validate(self, prefix: str = "adaptive") -> None:
        if not self.beta > 0:
            raise ValidationError(f"{prefix}.beta", "must be > 0")
        for name in ("lb_major", "lb_minor"):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f"{prefix}.{name}", "must be > 0")
            if value > self.ub:
                raise ValidationError(f"{prefix}.{name}", "must be <= ub")


@dataclass(frozen=True)
class UpstreamSignal:
    """Fixed-time signal upstream of the major approach (platoon source).

    ``lanes`` discharge in parallel, so the upstream saturation headway is
    ``sat_headway / lanes``.
    """

    cycle: float = 92.0
    green_major: float = 60.0
    distance: float = 650.0
    travel_speed: float = 13.9
    jitter_sd: float = 2.0
    lanes: int = 2
    offset: float = 0.0

    @property
    def travel_time(self) -> float:
        return self.distance / self.travel_speed

    def capacity_vph(self, sat_headway: float) -> float:
        return 3600.0 * self.green_major / self.cycle * self.lanes / sat_headway

    def validate(self, prefix: str = "upstream") -> None:
        if not 0 < self.green_major < self.cycle:
            raise ValidationError(f"{prefix}.green_major", "must satisfy 0 < green_major < cycle")
        if not self.distance > 0:
            raise ValidationError(f"{prefix}.distance", "must be > 0")
        if not self.travel_speed > 0:
            raise ValidationError(f"{prefix}.travel_speed", "must be > 0")
        if self.jitter_sd < 0:
            raise ValidationError(f"{prefix}.jitter_sd", "must be >= 0")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise ValidationError(f"{prefix}.lanes", "must be a positive integer")


@dataclass(frozen=True)
class ScenarioConfig:
    demand: DemandProfile
    actuated: ActuatedParams = field(default_factory=ActuatedParams)
    adaptive: Optional[AdaptiveParams] = None
    upstream: Optional[UpstreamSignal] = None
    arrival_type: str = "random"
    control_type: str = "typical_actuated"
    demand_scale_major: float = 1.0
    demand_scale_minor: float = 1.0
    sat_headway: float = 2.0
    startup_lost_time: float = 1.0
    queue_spacing: float = 7.5
    time_step: float = 0.1
    horizon: float = 3600.0
    seed: int = 0
    replications: int = 1
    queue_cap: int = 500
    probe_rate: Optional[float] = None

    @property
    def scaled_demand(self) -> DemandProfile:
        return self.demand.scaled(self.demand_scale_major, self.demand_scale_minor)

    def with_(self, **changes) -> "ScenarioConfig":
        """Validated copy with ``changes`` applied."""
        out = replace(self, **changes)
        out.validate()
        return out

    def validate(self) -> None:
        self.demand.validate()
        self.actuated.validate()
        if self.arrival_type not in ARRIVAL_TYPES:
            raise ValidationError("arrival_type", f"must be one of {ARRIVAL_TYPES}")
        if self.control_type not in CONTROL_TYPES:
            raise ValidationError("control_type", f"must be one of {CONTROL_TYPES}")
        if self.control_type == "ql_based":
            if self.adaptive is None:
                raise ValidationError("adaptive", "required when control_type is ql_based")
            self.adaptive.validate()
            for name in APPROACHES:
                if self.adaptive.lb(name) < self.actuated.gmin(name):
                    raise ValidationError(f"adaptive.lb_{name}", f"must be >= actuated.gmin_{name}")
        if self.arrival_type == "platoon":
            if self.upstream is None:
                raise ValidationError("upstream", "required when arrival_type is platoon")
            self.upstream.validate()
        for name in ("demand_scale_major", "demand_scale_minor", "sat_headway",
                     "queue_spacing", "time_step", "horizon"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, "must be > 0")
        if self.startup_lost_time < 0:
            raise ValidationError("startup_lost_time", "must be >= 0")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValidationError("replications", "must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError("seed", "must be a non-negative integer")
        if self.queue_cap < 1:
            raise ValidationError("queue_cap", "must be >= 1")
        if self.probe_rate is not None and not 0.0 <= self.probe_rate <= 1.0:
            raise ValidationError("probe_rate", "must lie in [0, 1]")
        if not math.isclose(self.demand.total_duration, self.horizon, rel_tol=0, abs_tol=1e-9):
            raise ValidationError("horizon", "must equal the total demand duration")
        self._check_tick_alignment()

    def _check_tick_alignment(self) -> None:
        timers = {f"actuated.{k}": getattr(self.actuated, k) for k in
                  ("gmin_major", "gmin_minor", "gmax_major", "gmax_minor",
                   "yellow", "all_red", "gap_out")}
        timers.update(sat_headway=self.sat_headway, startup_lost_time=self.startup_lost_time,
                      horizon=self.horizon)
        if self.adaptive is not None:
            timers.update({f"adaptive.{k}": getattr(self.adaptive, k)
                           for k in ("lb_major", "lb_minor", "ub")})
        for name, value in timers.items():
            if not is_tick_multiple(value, self.time_step):
                raise ValidationError(name, f"{value} is not a multiple of time_step {self.time_step}")


def is_tick_multiple(value: float, dt: float) -> bool:
    q = value / dt
    return abs(q - round(q)) < 1e-6


def to_ticks(value: float, dt: float) -> int:
    return int(round(value / dt))


# -- serialization ----------------------------------------------------------

_TOP_KEYS = {
    "demand", "demand_scale", "actuated", "adaptive", "upstream", "arrival_type",
    "control_type", "sat_headway", "startup_lost_time", "queue_spacing",
    "time_step", "horizon", "seed", "replications", "queue_cap", "probe_rate",
}


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{name}: expected a mapping", field=name)
    known = set(cls.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ValidationError(f"{name}.{key}", "unknown key")
    try:
        return cls(**{k: _number(v, f"{name}.{k}") for k, v in data.items()})
    except TypeError as exc:  # missing required fields
        raise ValidationError(name, str(exc)) from None


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    return value


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build and validate a scenario from its parsed mapping."""
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario file must contain a mapping")
    for key in data:
        if key not in _TOP_KEYS:
            raise ValidationError(key, "unknown key")
    if "demand" not in data:
        raise ValidationError("demand", "missing")
    rows = data["demand"]
    if not isinstance(rows, list):
        raise ScenarioParseError("demand: expected a list of intervals", field="demand")
    intervals = []
    for k, row in enumerate(rows):
        if not isinstance(row, dict) or set(row) != {"duration", "major", "minor"}:
            raise ValidationError(f"demand[{k}]", "needs exactly duration, major, minor")
        intervals.append(DemandInterval(
            float(_number(row["duration"], f"demand[{k}].duration")),
            float(_number(row["major"], f"demand[{k}].major")),
            float(_number(row["minor"], f"demand[{k}].minor")),
        ))
    kwargs = dict(demand=DemandProfile(tuple(intervals)))
    scale = data.get("demand_scale", {})
    if not isinstance(scale, dict) or not set(scale) <= {"major", "minor"}:
        raise ValidationError("demand_scale", "expected a mapping with major/minor")
    kwargs["demand_scale_major"] = float(_number(scale.get("major", 1.0), "demand_scale.major"))
    kwargs["demand_scale_minor"] = float(_number(scale.get("minor", 1.0), "demand_scale.minor"))
    if "actuated" in data:
        kwargs["actuated"] = _section(ActuatedParams, data["actuated"], "actuated")
    if data.get("adaptive") is not None:
        kwargs["adaptive"] = _section(AdaptiveParams, data["adaptive"], "adaptive")
    if data.get("upstream") is not None:
        kwargs["upstream"] = _section(UpstreamSignal, data["upstream"], "upstream")
    for key in ("arrival_type", "control_type"):
        if key in data:
            kwargs[key] = str(data[key])
    for key in ("sat_headway", "startup_lost_time", "queue_spacing", "time_step", "horizon"):
        if key in data:
            kwargs[key] = float(_number(data[key], key))
    for key in ("seed", "replications", "queue_cap"):
        if key in data:
            value = _number(data[key], key)
            if int(value) != value:
                raise ValidationError(key, "must be an integer")
            kwargs[key] = int(value)
    if data.get("probe_rate") is not None:
        kwargs["probe_rate"] = float(_number(data["probe_rate"], "probe_rate"))
    scenario = ScenarioConfig(**kwargs)
    scenario.validate()
    return scenario


def scenario_to_dict(scenario: ScenarioConfig) -> dict:
    def plain(obj):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}

    out = {
        "horizon": scenario.horizon,
        "time_step": scenario.time_step,
        "seed": scenario.seed,
        "replications": scenario.replications,
        "arrival_type": scenario.arrival_type,
        "control_type": scenario.control_type,
        "demand": [plain(iv) for iv in scenario.demand.intervals],
        "demand_scale": {"major": scenario.demand_scale_major, "minor": scenario.demand_scale_minor},
        "actuated": plain(scenario.actuated),
        "sat_headway": scenario.sat_headway,
        "startup_lost_time": scenario.startup_lost_time,
        "queue_spacing": scenario.queue_spacing,
        "queue_cap": scenario.queue_cap,
    }
    if scenario.adaptive is not None:
        out["adaptive"] = plain(scenario.adaptive)
    if scenario.upstream is not None:
        out["upstream"] = plain(scenario.upstream)
    if scenario.probe_rate is not None:
        out["probe_rate"] = scenario.probe_rate
    return out


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    return scenario_from_dict(data)


def dump_scenario(scenario: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def save_scenario(scenario: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_scenario(scenario))


# -- seeding ------------------------------------------------------------------

def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_replication_seed(base_seed: int, replication_index: int) -> int:
    """Seed of replication ``replication_index`` without touching earlier ones.

    Counter-based: the index is added to a mixed base in the 64-bit ring and
    finalized with the (bijective) splitmix64 mixer, so distinct indices
    always give distinct seeds for a fixed base.
    """
    if base_seed < 0 or replication_index < 0:
        raise ValueError("seed and replication index must be non-negative")
    key = (_splitmix64(base_seed & _MASK64) + replication_index) & _MASK64
    return _splitmix64(key)
