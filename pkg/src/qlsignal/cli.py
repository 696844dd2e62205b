"""Command-line interface: ``qlsignal {validate,run,optimize,sensitivity,estimate}``.

Every flag can also be set through an environment variable named
``QLSIGNAL_`` plus the flag name in upper case with dashes as underscores
(``--p-grid`` -> ``QLSIGNAL_P_GRID``). Command-line values win.

Exit codes: 0 success, 2 invalid input, 3 simulation diverged, 4 I/O error.
Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import errno
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .arrivals import scenario_streams
from .core import derive_replication_seed, load_scenario
from .engine import simulate
from .errors import (
    InsufficientDataError, OversaturationError, ScenarioParseError, SchemaError, ValidationError,
)
from .estimation import OVERFLOW_MODELS, VARIANTS, EstimationConfig
from .estimation.harness import (
    QUEUE_COLUMNS, evaluate_estimators, evaluate_snapshots, read_queues_csv, read_snapshots_csv,
    simulate_red_queues, write_cells_csv, write_error_table, write_queues_csv,
    write_snapshots_csv,
)
from .optimizer import (
    ParamGrid, SensitivityPlan, ValueRange, average_improvements, default_grid, grid_search,
    run_sensitivity, write_grid_csv, write_improvements_csv, write_sensitivity_csv,
)
from .reports import queue_sets_from_result, write_cycles_csv, write_summary_json

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
ENV_PREFIX = "QLSIGNAL_"

log = logging.getLogger("qlsignal")


class OutputExistsError(OSError):
    pass


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _env_flag(name) -> bool:
    return _env(name, "").lower() in ("1", "true", "yes", "on")


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _names(text: str, allowed) -> list[str]:
    out = [x.strip() for x in str(text).split(",") if x.strip()]
    for name in out:
        if name not in allowed:
            raise ValidationError("choice", f"{name!r} not in {tuple(allowed)}")
    return out


def _prepare_out(out: Path, names, force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (out / n).exists()]
    if clash and not force:
        raise OutputExistsError(errno.EEXIST, "output exists; pass --force to overwrite", str(out / clash[0]))


def _load(args):
    if not args.scenario:
        raise ValidationError("scenario", "no scenario path given")
    scenario = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = int(args.seed)
    if getattr(args, "reps", None) is not None:
        changes["replications"] = int(args.reps)
    return scenario.with_(**changes) if changes else scenario


# -- commands --------------------------------------------------------------------

def cmd_validate(args) -> int:
    scenario = _load(args)
    print(json.dumps({"valid": True, "scenario": str(args.scenario),
                      "control_type": scenario.control_type, "arrival_type": scenario.arrival_type}))
    return EXIT_OK


def _run_files(scenario, queue_trace: bool) -> list[str]:
    names = ["cycles.csv", "summary.json"]
    if scenario.probe_rate is not None:
        names.append("probes.csv")
    if queue_trace:
        names.append("queues.csv")
    return names


def cmd_run(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    reps = scenario.replications
    files = _run_files(scenario, args.queue_trace)
    dirs = [out] if reps == 1 else [out / f"rep_{k:03d}" for k in range(reps)]
    for d in dirs:
        _prepare_out(d, files, args.force)
    summaries = []
    for k, d in enumerate(dirs):
        seed = derive_replication_seed(scenario.seed, k)
        major, minor = scenario_streams(scenario, seed)
        result = simulate(scenario, major, minor)
        write_cycles_csv(result.cycles, d / "cycles.csv")
        write_summary_json(result.summary, d / "summary.json", replication=k, seed=seed,
                           scenario=str(args.scenario), approach_stats=result.approach_stats)
        if scenario.probe_rate is not None:
            write_snapshots_csv(result.probes, d / "probes.csv")
        if args.queue_trace:
            write_queues_csv(queue_sets_from_result(result), d / "queues.csv")
        summaries.append(result.summary.to_dict())
        log.info("replication %d: avg_delay %.2f s", k, result.summary.avg_delay)
    if reps > 1:
        _prepare_out(out, ["summary.json"], args.force)
        mean = {k: float(np.mean([s[k] for s in summaries])) for k in summaries[0]}
        with open(out / "summary.json", "w") as fh:
            json.dump({"mean": mean, "replications": summaries}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_optimize(args) -> int:
    scenario = _load(args)
    control = args.control_type or scenario.control_type
    grid = default_grid(control)
    if args.major_range:
        grid = ParamGrid(control, ValueRange.parse(args.major_range), grid.minor, grid.beta)
    if args.minor_range:
        grid = ParamGrid(control, grid.major, ValueRange.parse(args.minor_range), grid.beta)
    if args.beta_range:
        grid = ParamGrid(control, grid.major, grid.minor, ValueRange.parse(args.beta_range))
    out = Path(args.out)
    _prepare_out(out, ["gridsearch.csv", "best.json"], args.force)
    seeds = [derive_replication_seed(scenario.seed, k) for k in range(scenario.replications)]
    result = grid_search(grid, scenario, seeds, workers=args.workers)
    write_grid_csv(result, out / "gridsearch.csv")
    with open(out / "best.json", "w") as fh:
        json.dump({"control_type": control, "params": result.best_params(),
                   "objective": result.best.objective, "seeds": seeds}, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"best": result.best_params(), "avg_delay": result.best.objective}))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    plan = SensitivityPlan(
        profiles=tuple(int(x) for x in _floats(args.profiles)),
        replications=int(args.reps) if args.reps is not None else 30,
        arrival_types=tuple(_names(args.arrival_types, ("random", "platoon"))),
        base_seed=int(args.seed) if args.seed is not None else 0,
    )
    out = Path(args.out)
    files = [f"sensitivity_{a}.csv" for a in plan.arrival_types] + ["improvements.csv"]
    _prepare_out(out, files, args.force)
    cells = run_sensitivity(plan, workers=args.workers)
    for arrival in plan.arrival_types:
        write_sensitivity_csv(cells, out / f"sensitivity_{arrival}.csv", arrival)
    write_improvements_csv(average_improvements(cells), out / "improvements.csv")
    failed = [c.scenario for c in cells if c.error]
    if failed:
        log.warning("%d cells failed: %s", len(failed), ", ".join(failed))
    return EXIT_OK


def _input_kind(path: Path) -> str:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
    if not header:
        raise SchemaError(0, "empty input")
    cols = header.split(",")
    if all(c in cols for c in QUEUE_COLUMNS):
        return "queues"
    return "snapshots"


def cmd_estimate(args) -> int:
    variants = _names(args.variant, VARIANTS)
    models = _names(args.overflow_model, OVERFLOW_MODELS)
    p_grid = _floats(args.p_grid)
    for p in p_grid:
        if not 0.0 <= p <= 1.0:
            raise ValidationError("p-grid", f"penetration {p} outside [0, 1]")
    seed = int(args.seed) if args.seed is not None else 0
    out = Path(args.out)
    names = [f"errors_{v}_{m}.csv" for v in variants for m in models] + ["cells.csv"]
    if args.synthetic:
        sets = [simulate_red_queues(rho, args.cycles, (seed, i), overflow=not args.no_carryover)
                for i, rho in enumerate(_floats(args.synthetic))]
        names.append("queues.csv")
        _prepare_out(out, names, args.force)
        write_queues_csv(sets, out / "queues.csv")
        kind = "queues"
    else:
        if not args.input:
            raise ValidationError("input", "give --input or --synthetic")
        path = Path(args.input)
        kind = _input_kind(path)
        sets = read_queues_csv(path) if kind == "queues" else None
        _prepare_out(out, names, args.force)
    cycle_index = args.cycle_index if args.cycle_index > 0 else None
    base = EstimationConfig(X=args.capacity, C=args.cycle_length, cycle_index=cycle_index)
    if kind == "queues":
        cells = evaluate_estimators(sets, p_grid, variants, models, seed=seed,
                                    min_cycles=args.min_cycles, base_config=base)
    else:
        # observations already carry their probes: p is known only through the flags
        snaps = read_snapshots_csv(path)
        groups: dict = {}
        for s in snaps:
            groups.setdefault(s.approach or path.stem, []).append(s)
        cells = []
        for m in models:
            for v in variants:
                if v == "est1":
                    if args.arrival_rate is None or len(p_grid) != 1:
                        log.warning("est1 skipped: needs --arrival-rate and a single --p-grid value")
                        continue
                    cfg = replace(base, p=p_grid[0], lam=args.arrival_rate, variant=v, overflow_model=m)
                else:
                    cfg = replace(base, variant=v, overflow_model=m)
                for label, group in groups.items():
                    cells.append(evaluate_snapshots(group, cfg, label=label, min_cycles=args.min_cycles))
    write_cells_csv(cells, out / "cells.csv")
    for v in variants:
        for m in models:
            subset = [c for c in cells if c.variant == v and c.overflow_model == m]
            if subset:
                write_error_table(subset, out / f"errors_{v}_{m}.csv")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlsignal", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--seed", default=_env("seed"), help="base seed override")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_scenario(p):
        p.add_argument("--scenario", default=_env("scenario"), help="scenario YAML file")

    def with_out(p):
        p.add_argument("--out", default=_env("out", "out"), help="output directory")
        p.add_argument("--force", action="store_true", default=_env_flag("force"),
                       help="overwrite existing outputs")

    def with_reps(p):
        p.add_argument("--reps", default=_env("reps"), help="replication count override")

    def with_workers(p):
        p.add_argument("--workers", type=int, default=int(_env("workers", "1")))

    p = sub.add_parser("validate", parents=[common], help="check a scenario file")
    with_scenario(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", parents=[common], help="simulate a scenario")
    with_scenario(p)
    with_out(p)
    with_reps(p)
    p.add_argument("--queue-trace", action="store_true", default=_env_flag("queue-trace"),
                   help="also write end-of-red queue contents (queues.csv)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("optimize", parents=[common], help="grid search of control parameters")
    with_scenario(p)
    with_out(p)
    with_reps(p)
    with_workers(p)
    p.add_argument("--control-type", choices=("typical_actuated", "ql_based"),
                   default=_env("control-type"))
    p.add_argument("--major-range", default=_env("major-range"), help="lo:hi:step (s)")
    p.add_argument("--minor-range", default=_env("minor-range"), help="lo:hi:step (s)")
    p.add_argument("--beta-range", default=_env("beta-range"), help="lo:hi:step")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sensitivity", parents=[common], help="paired +-20%% demand experiment")
    with_out(p)
    with_reps(p)
    with_workers(p)
    p.add_argument("--profiles", default=_env("profiles", "1,2,3"))
    p.add_argument("--arrival-types", default=_env("arrival-types", "random,platoon"))
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("estimate", parents=[common], help="score queue length estimators")
    with_out(p)
    p.add_argument("--input", default=_env("input"), help="queues.csv or probes.csv from run")
    p.add_argument("--synthetic", default=_env("synthetic"),
                   help="comma-separated rho levels for a fixed-time generator instead of --input")
    p.add_argument("--cycles", type=int, default=int(_env("cycles", "10000")))
    p.add_argument("--no-carryover", action="store_true", default=_env_flag("no-carryover"))
    p.add_argument("--p-grid", default=_env("p-grid", "0.001,0.05,0.1,0.2,0.3,0.5"))
    p.add_argument("--variant", default=_env("variant", ",".join(VARIANTS)))
    p.add_argument("--overflow-model", default=_env("overflow-model", "none"))
    p.add_argument("--arrival-rate", type=float, default=_env("arrival-rate"),
                   help="known arrival rate (veh/s) for est1 on probe snapshots")
    p.add_argument("--cycle-length", type=float, default=float(_env("cycle-length", "93")),
                   help="mean cycle length C (s) for probe snapshots")
    p.add_argument("--capacity", type=float, default=float(_env("capacity", "24")),
                   help="capacity X (veh/cycle) for probe snapshots")
    p.add_argument("--cycle-index", type=int, default=int(_env("cycle-index", "2")),
                   help="cycle index fed to the overflow model; 0 uses each snapshot's own")
    p.add_argument("--min-cycles", type=int, default=int(_env("min-cycles", "100")))
    p.set_defaults(func=cmd_estimate)
    return parser


def _error(code: int, exc: Exception, **extra) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for key in ("field", "row", "approach", "time", "queue_length", "cap"):
        if getattr(exc, key, None) is not None:
            payload[key] = getattr(exc, key)
    filename = getattr(exc, "filename", None)
    if filename is not None:
        payload["path"] = str(filename)
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OversaturationError as exc:
        return _error(EXIT_DIVERGED, exc)
    except (ValidationError, ScenarioParseError, SchemaError, InsufficientDataError) as exc:
        return _error(EXIT_INVALID, exc, path=getattr(args, "scenario", None) or getattr(args, "input", None))
    except ValueError as exc:
        return _error(EXIT_INVALID, exc)
    except OSError as exc:
        return _error(EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
