"""File formats for simulation outputs.

``cycles.csv`` has one row per cycle with the CycleLog columns (booleans as
0/1, times in seconds, queues in vehicles). ``summary.json`` holds the
MetricsSummary fields under ``"summary"`` plus run metadata.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields

from .engine import CYCLE_COLUMNS, CycleLog, MetricsSummary, SimulationResult
from .errors import SchemaError
from .estimation.harness import QueueSet


def write_cycles_csv(cycles, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CYCLE_COLUMNS)
        for c in cycles:
            row = asdict(c)
            writer.writerow([int(v) if isinstance(v, bool) else v for v in row.values()])


def read_cycles_csv(path) -> list[CycleLog]:
    """Parse a cycle log; raises SchemaError naming the first bad row (1-based)."""
    kinds = {f.name: f.type for f in fields(CycleLog)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(0, "empty input")
        missing = [c for c in CYCLE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(0, f"missing columns {missing}")
        out = []
        for row_no, row in enumerate(reader, start=1):
            values = {}
            for name in CYCLE_COLUMNS:
                raw = row[name]
                try:
                    if kinds[name] in ("int", int):
                        values[name] = int(raw)
                    elif kinds[name] in ("bool", bool):
                        if raw not in ("0", "1"):
                            raise ValueError(raw)
                        values[name] = raw == "1"
                    else:
                        values[name] = float(raw)
                        if not math.isfinite(values[name]):
                            raise ValueError(raw)
                except (TypeError, ValueError):
                    raise SchemaError(row_no, f"bad value for {name!r}: {raw!r}") from None
            out.append(CycleLog(**values))
    return out


def write_summary_json(summary: MetricsSummary, path, **meta) -> None:
    with open(path, "w") as fh:
        json.dump({"summary": summary.to_dict(), **meta}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary_json(path) -> MetricsSummary:
    with open(path) as fh:
        data = json.load(fh)
    return MetricsSummary(**data["summary"])


def queue_sets_from_result(result: SimulationResult, prefix: str = "") -> list[QueueSet]:
    """One QueueSet per approach from the logged end-of-red queues."""
    out = []
    for approach, stats in result.approach_stats.items():
        queues = [q for q in result.red_queues if q.approach == approach]
        if not queues:
            continue
        out.append(QueueSet(f"{prefix}{approach}", stats["rho"], stats["arrival_rate"],
                            stats["C"], stats["X"], queues))
    return out
