"""Offline parameter search and the paired demand-sensitivity experiment.

Both drivers feed every alternative the same arrival streams per seed
(common random numbers), so differences between alternatives come from the
control logic only.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .arrivals import scenario_streams
from .core import APPROACHES, ScenarioConfig, derive_replication_seed
from .engine import improvement, simulate
from .errors import OversaturationError, QLSignalError, ValidationError
from .fixtures import PROFILES, SCALE_PAIRS, make_scenario, scale_label, scenario_label

log = logging.getLogger(__name__)

MEASURES = ("avg_delay", "n_stops", "avg_queue")


@dataclass(frozen=True)
class ValueRange:
    """Inclusive ``lo..hi`` in uniform ``step`` increments."""

    lo: float
    hi: float
    step: float = 1.0

    def validate(self, name: str = "range") -> None:
        if not self.step > 0:
            raise ValidationError(name, "step must be > 0")
        if self.hi < self.lo:
            raise ValidationError(name, f"empty range {self.lo}..{self.hi}")

    def values(self) -> tuple:
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9))
        return tuple(round(self.lo + k * self.step, 10) for k in range(n + 1))

    @classmethod
    def parse(cls, text: str) -> "ValueRange":
        """``"lo:hi:step"``, ``"lo:hi"`` (step 1) or a single value."""
        parts = [float(x) for x in text.split(":")]
        if len(parts) == 1:
            return cls(parts[0], parts[0], 1.0)
        if len(parts) == 2:
            return cls(parts[0], parts[1], 1.0)
        if len(parts) == 3:
            return cls(*parts)
        raise ValueError(f"cannot parse range {text!r}")


@dataclass(frozen=True)
class ParamGrid:
    """Search space. For typical control ``major``/``minor`` are max greens;
    for the queue-length method they are the lower bounds and ``beta`` is
    also searched."""

    control_type: str
    major: ValueRange
    minor: ValueRange
    beta: Optional[ValueRange] = None

    @property
    def names(self) -> tuple:
        if self.control_type == "ql_based":
            return ("lb_major", "lb_minor", "beta")
        return ("gmax_major", "gmax_minor")

    def validate(self) -> None:
        if self.control_type not in ("typical_actuated", "ql_based"):
            raise ValidationError("control_type", "must be typical_actuated or ql_based")
        self.major.validate(self.names[0])
        self.minor.validate(self.names[1])
        if self.control_type == "ql_based":
            if self.beta is None:
                raise ValidationError("beta", "range required for ql_based")
            self.beta.validate("beta")

    def points(self) -> list[tuple]:
        """Grid points in tie-break order: major, then minor, then beta ascending."""
        axes = [self.major.values(), self.minor.values()]
        if self.control_type == "ql_based":
            axes.append(self.beta.values())
        return list(itertools.product(*axes))

    def apply(self, scenario: ScenarioConfig, point: tuple) -> ScenarioConfig:
        if self.control_type == "ql_based":
            lb_major, lb_minor, beta = point
            adaptive = replace(scenario.adaptive, beta=beta, lb_major=lb_major, lb_minor=lb_minor)
            return scenario.with_(control_type="ql_based", adaptive=adaptive)
        gmax_major, gmax_minor = point
        actuated = replace(scenario.actuated, gmax_major=gmax_major, gmax_minor=gmax_minor)
        return scenario.with_(control_type="typical_actuated", actuated=actuated)


def default_grid(control_type: str) -> ParamGrid:
    """5 s increments for green bounds and 0.5 for beta."""
    if control_type == "ql_based":
        return ParamGrid("ql_based", ValueRange(40, 80, 5), ValueRange(5, 20, 5), ValueRange(1.5, 3.5, 0.5))
    return ParamGrid("typical_actuated", ValueRange(40, 90, 5), ValueRange(10, 40, 5))


@dataclass
class GridPoint:
    point: tuple
    objective: float
    failures: int = 0


@dataclass
class GridResult:
    names: tuple
    best: GridPoint
    table: list

    def best_params(self) -> dict:
        return dict(zip(self.names, self.best.point))


def _mean_delay(scenario: ScenarioConfig, streams: list) -> tuple[float, int]:
    delays, failures = [], 0
    for major, minor in streams:
        try:
            delays.append(simulate(scenario, major, minor).summary.avg_delay)
        except OversaturationError as exc:
            log.warning("oversaturated at %s: %s", scenario.actuated, exc)
            failures += 1
    if failures:
        return math.inf, failures
    return float(np.mean(delays)), 0


def _evaluate_point(args) -> GridPoint:
    grid, scenario, point, streams = args
    objective, failures = _mean_delay(grid.apply(scenario, point), streams)
    return GridPoint(point, objective, failures)


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def grid_search(grid: ParamGrid, scenario: ScenarioConfig, seeds, workers: int = 1) -> GridResult:
    """Mean overall delay over ``seeds`` at every grid point; returns the argmin.

    Oversaturation at any seed makes that point's objective infinite. Ties
    go to the earliest point in ``grid.points()`` order.
    """
    grid.validate()
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("seeds", "at least one seed required")
    points = grid.points()
    for point in points:
        grid.apply(scenario, point)  # reject invalid combinations before simulating
    streams = [scenario_streams(scenario, s) for s in seeds]
    table = _map(_evaluate_point, [(grid, scenario, p, streams) for p in points], workers)
    best = table[0]
    for row in table[1:]:
        if row.objective < best.objective:
            best = row
    return GridResult(grid.names, best, table)


def write_grid_csv(result: GridResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(result.names) + ["objective", "failures", "best"])
        for row in result.table:
            writer.writerow(list(row.point) + [repr(row.objective), row.failures, int(row is result.best)])


# -- sensitivity ----------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityPlan:
    """Which scenarios to run and how; the tuned parameters of each profile
    are held fixed across its scaled demands.

    ``arms`` names the control type of the baseline and the alternative.
    """

    profiles: tuple = (1, 2, 3)
    scale_pairs: tuple = SCALE_PAIRS
    replications: int = 30
    arrival_types: tuple = ("random", "platoon")
    base_seed: int = 0
    arms: tuple = ("typical_actuated", "ql_based")

    def validate(self) -> None:
        if self.replications < 1:
            raise ValidationError("replications", "must be >= 1")
        for prof in self.profiles:
            if prof not in PROFILES:
                raise ValidationError("profiles", f"no fixture for profile {prof}")
        for pair in self.scale_pairs:
            if len(pair) != 2 or min(pair) <= 0:
                raise ValidationError("scale_pairs", f"bad pair {pair}")
        if len(self.arms) != 2:
            raise ValidationError("arms", "need exactly two control types")

    def seeds(self) -> list[int]:
        return [derive_replication_seed(self.base_seed, k) for k in range(self.replications)]


@dataclass
class SensitivityCell:
    arrival_type: str
    profile: int
    scenario: str
    scale: str
    base: dict = field(default_factory=dict)
    alt: dict = field(default_factory=dict)
    improvement: dict = field(default_factory=dict)
    maxouts: dict = field(default_factory=dict)
    error: str = ""


def _metric_keys():
    for m in MEASURES:
        yield m
        for ap in APPROACHES:
            yield f"{m}_{ap}"


def run_pair(base: ScenarioConfig, alt: ScenarioConfig, seeds) -> tuple[dict, dict, dict]:
    """Paired replications: both configurations see the same streams per seed.

    Returns mean metrics of each arm and the percent improvement of ``alt``
    over ``base`` for every measure (overall and per approach).
    """
    keys = list(_metric_keys()) + [f"maxouts_{ap}" for ap in APPROACHES]
    sums = {"base": {k: [] for k in keys}, "alt": {k: [] for k in keys}}
    for seed in seeds:
        major, minor = scenario_streams(base, seed)
        for arm, scenario in (("base", base), ("alt", alt)):
            summary = simulate(scenario, major, minor).summary
            for k in keys:
                sums[arm][k].append(getattr(summary, k))
    means = {arm: {k: float(np.mean(v)) for k, v in vals.items()} for arm, vals in sums.items()}
    imp = {k: improvement(means["base"][k], means["alt"][k]) for k in _metric_keys()}
    return means["base"], means["alt"], imp


def _run_cell(args) -> SensitivityCell:
    plan, arrival_type, profile, index, pair = args
    cell = SensitivityCell(arrival_type, profile, scenario_label(profile, index), scale_label(pair))
    try:
        base = make_scenario(profile, pair, arrival_type, control_type=plan.arms[0])
        alt = base.with_(control_type=plan.arms[1])
        cell.base, cell.alt, cell.improvement = run_pair(base, alt, plan.seeds())
        cell.maxouts = {f"{arm}_{ap}": vals.pop(f"maxouts_{ap}")
                        for arm, vals in (("base", cell.base), ("alt", cell.alt)) for ap in APPROACHES}
    except QLSignalError as exc:
        log.warning("cell %s %s failed: %s", arrival_type, cell.scenario, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def run_sensitivity(plan: SensitivityPlan, workers: int = 1) -> list[SensitivityCell]:
    """Run every (arrival type, profile, scale pair) cell; failures are kept
    in ``cell.error`` and the remaining cells still run."""
    plan.validate()
    tasks = [(plan, arrival, prof, i, pair)
             for arrival in plan.arrival_types
             for prof in plan.profiles
             for i, pair in enumerate(plan.scale_pairs)]
    return _map(_run_cell, tasks, workers)


def average_improvements(cells) -> list[dict]:
    """Mean improvement over successful cells per arrival type and measure,
    overall and per approach."""
    rows = []
    for arrival in dict.fromkeys(c.arrival_type for c in cells):
        ok = [c for c in cells if c.arrival_type == arrival and not c.error]
        for m in MEASURES:
            row = {"arrival_type": arrival, "measure": m, "cells": len(ok)}
            for suffix, key in (("overall", m), ("major", f"{m}_major"), ("minor", f"{m}_minor")):
                vals = [c.improvement[key] for c in ok if math.isfinite(c.improvement[key])]
                row[suffix] = float(np.mean(vals)) if vals else math.nan
            rows.append(row)
    return rows


SENSITIVITY_COLUMNS = (["scenario", "scale"]
                       + [f"{arm}_{m}" for m in MEASURES for arm in ("typ", "qlb")]
                       + [f"imp_{m}" for m in MEASURES]
                       + [f"{arm}_maxouts_{ap}" for arm in ("typ", "qlb") for ap in APPROACHES]
                       + ["error"])


def write_sensitivity_csv(cells, path, arrival_type: str) -> None:
    """One row per scenario: both arms' means and the percent improvement."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SENSITIVITY_COLUMNS)
        writer.writeheader()
        for c in cells:
            if c.arrival_type != arrival_type:
                continue
            row = {"scenario": c.scenario, "scale": c.scale, "error": c.error}
            if not c.error:
                for m in MEASURES:
                    row[f"typ_{m}"] = repr(c.base[m])
                    row[f"qlb_{m}"] = repr(c.alt[m])
                    row[f"imp_{m}"] = repr(c.improvement[m])
                for ap in APPROACHES:
                    row[f"typ_maxouts_{ap}"] = repr(c.maxouts[f"base_{ap}"])
                    row[f"qlb_maxouts_{ap}"] = repr(c.maxouts[f"alt_{ap}"])
            writer.writerow(row)


def write_improvements_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["arrival_type", "measure", "cells", "overall", "major", "minor"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
