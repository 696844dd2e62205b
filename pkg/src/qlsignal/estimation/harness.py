"""Estimator evaluation: re-tag logged queues at several penetrations and score.

Ground truth is the end-of-red queue recorded by a simulation (the engine or
the fixed-time generator below). For every penetration ``p`` each vehicle is
tagged once, so a residual vehicle keeps its status across cycles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..errors import InsufficientDataError, SchemaError, UndefinedInputError
from .estimators import (
    IN_ARRIVALS, IN_OVERFLOW, NO_PROBE, EstimationConfig, ProbeSnapshot, RedQueue, estimate_queue,
    estimator_variance, hyperparameters, probe_snapshot,
)

DEFAULT_P_GRID = (0.001, 0.05, 0.1, 0.2, 0.3, 0.5)


@dataclass
class QueueSet:
    """End-of-red queues from one source with its traffic characteristics.

    ``arrival_rate`` is in vehicles/s, ``C`` seconds, ``X`` vehicles/cycle.
    """

    label: str
    rho: float
    arrival_rate: float
    C: float
    X: float
    queues: list

    @property
    def max_vehicle_id(self) -> int:
        return max((max(q.vehicle_ids) for q in self.queues if q.vehicle_ids), default=-1)


def simulate_red_queues(rho: float, n_cycles: int, seed=None, red: float = 45.0,
                        green: float = 48.0, sat_headway: float = 2.0,
                        overflow: bool = True, arrivals=None) -> QueueSet:
    """Fixed-time single-approach point queue with Poisson arrivals.

    Each cycle is ``red`` then ``green``; capacity is green / sat_headway
    vehicles per cycle and the arrival rate is rho * X / C. With
    ``overflow=False`` every red starts from an empty queue. Sorted
    ``arrivals`` (s) replace the Poisson draw when given.
    """
    C = red + green
    X = green / sat_headway
    lam = rho * X / C
    horizon = n_cycles * C
    if arrivals is None:
        rng = np.random.default_rng(seed)
        expected = lam * horizon
        size = int(expected + 10 * math.sqrt(expected) + 100) if lam > 0 else 0
        times = np.cumsum(rng.exponential(1.0 / lam, size)) if size else np.empty(0)
    else:
        times = np.asarray(arrivals, dtype=float)
    times = times[times < horizon]
    queues = []
    waiting: list[int] = []
    for k in range(n_cycles):
        onset = k * C
        lo, hi = np.searchsorted(times, [onset, onset + red])
        if not overflow:
            waiting = []
        waiting = waiting + list(range(lo, hi))
        queues.append(RedQueue(k + 1, "major", red, tuple(waiting),
                               tuple(float(times[v]) - onset for v in waiting)))
        # green service, FIFO at saturation headway
        g0, g1 = onset + red, onset + C
        hi2 = np.searchsorted(times, g1)
        pending = waiting + list(range(hi, hi2))
        prev = -math.inf
        left = []
        for v in pending:
            d = max(times[v], prev + sat_headway, g0)
            if d >= g1 - 1e-12:
                left.append(v)
                continue
            prev = d
        waiting = left
    return QueueSet(f"rho={rho:g}", rho, lam, C, X, queues)


def tag_queues(queue_set: QueueSet, p: float, seed=None) -> np.ndarray:
    """Probe flag per vehicle id, Bernoulli(p)."""
    return np.random.default_rng(seed).random(queue_set.max_vehicle_id + 1) < p


def snapshots_for(queue_set: QueueSet, flags: np.ndarray) -> list[ProbeSnapshot]:
    out = []
    for q in queue_set.queues:
        offsets = q.join_offsets
        residual = sum(1 for o in offsets if o < 0)
        out.append(probe_snapshot(offsets, [bool(flags[v]) for v in q.vehicle_ids], 0.0, q.R,
                                  q.cycle, q.approach, residual))
    return out


class _Pool:
    """Running mean of identifiable (p_hat, lambda_hat) over past cycles."""

    def __init__(self):
        self.n = 0
        self.p = 0.0
        self.lam = 0.0

    def add(self, p, lam):
        self.n += 1
        self.p += (p - self.p) / self.n
        self.lam += (lam - self.lam) / self.n

    def prior(self):
        return (self.p, self.lam) if self.n else (0.0, 0.0)


def estimate_series(snapshots: Iterable[ProbeSnapshot], config: EstimationConfig) -> dict:
    """Estimate every snapshot in order.

    For est2/est3 a cycle without probes borrows the running mean of the
    hyper-parameters identified in earlier cycles (zero before the first
    probe is ever seen).
    """
    pool = _Pool()
    est, true, member, p_used, lam_used = [], [], [], [], []
    for snap in snapshots:
        cfg = config
        if config.variant != "est1":
            cfg = config.with_prior(*pool.prior())
        try:
            value = estimate_queue(snap, cfg)
        except UndefinedInputError:
            p0, lam0 = cfg.p, cfg.lam
            value = snap.l + (1.0 - p0) * lam0 * max(snap.R - snap.t, 0.0)
        if snap.l > 0 and config.variant != "est1":
            try:
                p_hat, lam_hat = hyperparameters(snap, replace(config, p=None, lam=None))
                pool.add(p_hat, lam_hat)
            except UndefinedInputError:
                pass
        est.append(value)
        true.append(snap.true_n)
        member.append(snap.membership)
        p_used.append(cfg.p if cfg.p is not None else np.nan)
        lam_used.append(cfg.lam if cfg.lam is not None else np.nan)
    final_p, final_lam = (config.p, config.lam) if config.variant == "est1" else pool.prior()
    return dict(estimate=np.array(est, dtype=float), true=np.array(true, dtype=float),
                membership=np.array(member), p_hat=final_p, lambda_hat=final_lam)


@dataclass
class ErrorCell:
    label: str
    rho: float
    p: float
    variant: str
    overflow_model: str
    n_cycles: int
    true_ql: float
    mean_estimate: float
    rmse: float
    pct_rmse: float
    pct_delta_en: float
    cv_empirical: float
    cv_model: float
    pct_delta_cv: float


CELL_COLUMNS = tuple(ErrorCell.__dataclass_fields__)


def score(series: dict, config: EstimationConfig, *, label="", rho=float("nan"), p=float("nan"),
          R: float = 45.0, mean_t_prime: Optional[float] = None, i: int = 2,
          min_cycles: int = 100) -> ErrorCell:
    """Error metrics of one (source, p, variant, overflow model) cell.

    ``pct_delta_en`` is 100 (mean true - mean estimate) / mean true.
    ``cv_model`` is the model standard deviation over the mean estimate and
    ``pct_delta_cv`` its difference, in percentage points, from the
    empirical error standard deviation over the mean true queue.
    """
    est, true = series["estimate"], series["true"]
    n = est.size
    if n < min_cycles:
        raise InsufficientDataError(f"{label}: {n} cycles, need at least {min_cycles}")
    err = est - true
    mean_true = float(true.mean())
    mean_est = float(est.mean())
    rmse = float(np.sqrt(np.mean(err ** 2)))
    safe = mean_true if mean_true > 0 else math.nan
    cv_emp = float(err.std()) / safe
    member = series["membership"]
    probs = tuple(float(np.mean(member == k)) for k in (IN_OVERFLOW, IN_ARRIVALS, NO_PROBE))
    t_prime = config.C / 2.0 if mean_t_prime is None else mean_t_prime
    try:
        p_hat = min(max(series["p_hat"], 0.0), 1.0)
        var = estimator_variance(probs, config, i, p_hat=p_hat, lambda_hat=series["lambda_hat"],
                                 R=R, mean_t_prime=t_prime)
        cv_model = math.sqrt(var) / mean_est if mean_est > 0 else math.nan
    except (ValueError, OverflowError):
        cv_model = math.nan
    return ErrorCell(
        label=label, rho=rho, p=p, variant=config.variant, overflow_model=config.overflow_model,
        n_cycles=n, true_ql=mean_true, mean_estimate=mean_est, rmse=rmse,
        pct_rmse=100.0 * rmse / safe, pct_delta_en=100.0 * (mean_true - mean_est) / safe,
        cv_empirical=cv_emp, cv_model=cv_model, pct_delta_cv=100.0 * (cv_emp - cv_model),
    )


def evaluate_queue_set(queue_set: QueueSet, p: float, config: EstimationConfig, seed=None,
                       min_cycles: int = 100) -> ErrorCell:
    flags = tag_queues(queue_set, p, seed)
    snaps = snapshots_for(queue_set, flags)
    cfg = replace(config, X=queue_set.X, C=queue_set.C)
    if cfg.variant == "est1":
        cfg = replace(cfg, p=p, lam=queue_set.arrival_rate)
    series = estimate_series(snaps, cfg)
    waits = [s.pre_red_wait for s in snaps if s.probe_in_residual]
    mean_t_prime = queue_set.C - float(np.mean(waits)) if waits else None
    R = float(np.mean([s.R for s in snaps])) if snaps else 0.0
    i = cfg.cycle_index if cfg.cycle_index is not None else 2
    return score(series, cfg, label=queue_set.label, rho=queue_set.rho, p=p, R=R,
                 mean_t_prime=mean_t_prime, i=i, min_cycles=min_cycles)


def evaluate_estimators(queue_sets: Iterable[QueueSet], p_grid=DEFAULT_P_GRID,
                        variants=("est1", "est2", "est3"), overflow_models=("none",),
                        seed: int = 0, min_cycles: int = 100,
                        base_config: Optional[EstimationConfig] = None) -> list[ErrorCell]:
    """Score every (source, p, variant, overflow model) combination.

    The same tagging (seeded per source and p) is shared by all variants so
    that they are compared on identical probe observations.
    """
    base_config = base_config or EstimationConfig()
    cells = []
    for s_index, qs in enumerate(queue_sets):
        for p in p_grid:
            tag_seed = (seed, s_index)  # shared uniforms: tags are nested across p
            for model in overflow_models:
                for variant in variants:
                    known = variant == "est1"
                    cfg = replace(base_config, variant=variant, overflow_model=model,
                                  p=p if known else None, lam=qs.arrival_rate if known else None)
                    cells.append(evaluate_queue_set(qs, p, cfg, tag_seed, min_cycles))
    return cells


def evaluate_snapshots(snapshots: list[ProbeSnapshot], config: EstimationConfig,
                       label: str = "observed", min_cycles: int = 100) -> ErrorCell:
    """Score snapshots that already carry their probe observations."""
    if any(s.true_n is None for s in snapshots):
        raise ValueError("every snapshot needs true_n")
    series = estimate_series(snapshots, config)
    R = float(np.mean([s.R for s in snapshots])) if snapshots else 0.0
    return score(series, config, label=label, p=config.p if config.p is not None else math.nan,
                 R=R, i=config.cycle_index or 2, min_cycles=min_cycles)


# -- CSV ---------------------------------------------------------------------

SNAPSHOT_COLUMNS = ("cycle", "l", "t", "m", "R", "true_N")
SNAPSHOT_OPTIONAL = ("approach", "residual", "probe_in_residual", "pre_red_wait")
QUEUE_COLUMNS = ("label", "cycle", "approach", "R", "position", "vehicle_id", "join_offset",
                 "arrival_rate", "C", "X", "rho")


def write_snapshots_csv(snapshots, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SNAPSHOT_COLUMNS + SNAPSHOT_OPTIONAL)
        for s in snapshots:
            writer.writerow([s.cycle_index, s.l, repr(float(s.t)), s.m, repr(float(s.R)), s.true_n,
                             s.approach or "", s.residual, int(s.probe_in_residual),
                             repr(float(s.pre_red_wait))])


def _parse(row_no, row, key, kind):
    raw = row.get(key)
    if raw is None or raw == "":
        raise SchemaError(row_no, f"missing value for {key!r}")
    try:
        value = kind(raw)
    except ValueError:
        raise SchemaError(row_no, f"{key!r} is not a valid {kind.__name__}: {raw!r}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise SchemaError(row_no, f"{key!r} is not finite: {raw!r}")
    return value


def _open_rows(path, required):
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        fh.close()
        raise SchemaError(0, "empty input")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        fh.close()
        raise SchemaError(0, f"missing columns {missing}")
    return fh, reader


def read_snapshots_csv(path) -> list[ProbeSnapshot]:
    """Parse (cycle, l, t, m, R, true_N [, ...]) rows; rows are numbered from 1."""
    fh, reader = _open_rows(path, SNAPSHOT_COLUMNS)
    out = []
    with fh:
        for row_no, row in enumerate(reader, start=1):
            kw = dict(
                cycle_index=_parse(row_no, row, "cycle", int), l=_parse(row_no, row, "l", int),
                t=_parse(row_no, row, "t", float), m=_parse(row_no, row, "m", int),
                R=_parse(row_no, row, "R", float), true_n=_parse(row_no, row, "true_N", int),
            )
            if row.get("approach"):
                kw["approach"] = row["approach"]
            if row.get("residual"):
                kw["residual"] = _parse(row_no, row, "residual", int)
            if row.get("probe_in_residual"):
                kw["probe_in_residual"] = _parse(row_no, row, "probe_in_residual", int) == 1
            if row.get("pre_red_wait"):
                kw["pre_red_wait"] = _parse(row_no, row, "pre_red_wait", float)
            try:
                out.append(ProbeSnapshot(**kw))
            except ValueError as exc:
                raise SchemaError(row_no, str(exc)) from None
    if not out:
        raise SchemaError(0, "no data rows")
    return out


def write_queues_csv(queue_sets: Iterable[QueueSet], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUEUE_COLUMNS)
        for qs in queue_sets:
            for q in qs.queues:
                if not q.vehicle_ids:
                    writer.writerow([qs.label, q.cycle, q.approach, repr(float(q.R)), 0, -1, "",
                                     *(repr(float(x)) for x in (qs.arrival_rate, qs.C, qs.X, qs.rho))])
                for pos, (v, o) in enumerate(zip(q.vehicle_ids, q.join_offsets), start=1):
                    writer.writerow([qs.label, q.cycle, q.approach, repr(float(q.R)), pos, v, repr(float(o)),
                                     *(repr(float(x)) for x in (qs.arrival_rate, qs.C, qs.X, qs.rho))])


def read_queues_csv(path) -> list[QueueSet]:
    """Parse per-vehicle end-of-red queue rows into one QueueSet per label.

    A row with position 0 records an empty queue.
    """
    fh, reader = _open_rows(path, QUEUE_COLUMNS)
    sets: dict = {}
    with fh:
        for row_no, row in enumerate(reader, start=1):
            label = row["label"] or "queues"
            cycle = _parse(row_no, row, "cycle", int)
            approach = row["approach"]
            R = _parse(row_no, row, "R", float)
            pos = _parse(row_no, row, "position", int)
            meta = tuple(_parse(row_no, row, k, float) for k in ("arrival_rate", "C", "X", "rho"))
            entry = sets.setdefault(label, {"meta": meta, "queues": {}})
            q = entry["queues"].setdefault((cycle, approach), {"R": R, "ids": [], "offsets": []})
            if pos == 0:
                continue
            if pos != len(q["ids"]) + 1:
                raise SchemaError(row_no, f"position {pos} out of order")
            q["ids"].append(_parse(row_no, row, "vehicle_id", int))
            q["offsets"].append(_parse(row_no, row, "join_offset", float))
    if not sets:
        raise SchemaError(0, "no data rows")
    out = []
    for label, entry in sets.items():
        lam, C, X, rho = entry["meta"]
        queues = [RedQueue(cycle, approach, q["R"], tuple(q["ids"]), tuple(q["offsets"]))
                  for (cycle, approach), q in entry["queues"].items()]
        out.append(QueueSet(label, rho, lam, C, X, queues))
    return out


def write_cells_csv(cells: Iterable[ErrorCell], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CELL_COLUMNS)
        writer.writeheader()
        for c in cells:
            writer.writerow(asdict(c))


PIVOT_METRICS = ("mean_estimate", "rmse", "pct_rmse", "pct_delta_en", "pct_delta_cv")


def write_error_table(cells: list[ErrorCell], path) -> None:
    """One row per source (rho level), one column group per p.

    All cells must share one variant and overflow model.
    """
    if len({(c.variant, c.overflow_model) for c in cells}) > 1:
        raise ValueError("error table needs cells of a single variant and overflow model")
    ps = sorted({c.p for c in cells})
    rows: dict = {}
    for c in cells:
        rows.setdefault((c.label, c.rho), {"true_ql": c.true_ql})[c.p] = c
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "rho", "true_ql"] + [f"{m}@p={p:g}" for p in ps for m in PIVOT_METRICS])
        for (label, rho), by_p in rows.items():
            line = [label, f"{rho:.4g}", f"{by_p['true_ql']:.4f}"]
            for p in ps:
                cell = by_p.get(p)
                line += [f"{getattr(cell, m):.4f}" if cell else "" for m in PIVOT_METRICS]
            writer.writerow(line)
