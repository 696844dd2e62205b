import csv
import math

import numpy as np
import pytest

from qlsignal import optimizer
from qlsignal.arrivals import scenario_streams
from qlsignal.core import derive_replication_seed
from qlsignal.engine import simulate
from qlsignal.errors import ValidationError
from qlsignal.optimizer import (
    ParamGrid, SensitivityPlan, ValueRange, average_improvements, default_grid, grid_search,
    run_pair, run_sensitivity, write_grid_csv, write_improvements_csv, write_sensitivity_csv,
)

from conftest import small_scenario
from oracles import brute_force_argmin


def test_value_range_inclusive_uniform():
    assert ValueRange(40, 60, 5).values() == (40, 45, 50, 55, 60)
    assert ValueRange(1.5, 3.5, 0.5).values() == (1.5, 2.0, 2.5, 3.0, 3.5)
    assert ValueRange(10, 12, 5).values() == (10,)


def test_value_range_parse():
    assert ValueRange.parse("40:90:5") == ValueRange(40, 90, 5)
    assert ValueRange.parse("30") == ValueRange(30, 30, 1)
    with pytest.raises(ValueError):
        ValueRange.parse("1:2:3:4")


def test_bad_ranges_rejected():
    with pytest.raises(ValidationError):
        ValueRange(5, 1, 1).validate()
    with pytest.raises(ValidationError):
        ValueRange(1, 5, 0).validate()
    with pytest.raises(ValidationError):
        ParamGrid("ql_based", ValueRange(40, 40), ValueRange(5, 5)).validate()


def test_default_grids():
    typ = default_grid("typical_actuated")
    assert typ.names == ("gmax_major", "gmax_minor")
    assert len(typ.points()) == 11 * 7
    ql = default_grid("ql_based")
    assert ql.names == ("lb_major", "lb_minor", "beta")
    assert ql.points()[:2] == [(40, 5, 1.5), (40, 5, 2.0)]


def test_singleton_grid_returns_its_point():
    scenario = small_scenario()
    grid = ParamGrid("typical_actuated", ValueRange(30, 30), ValueRange(12, 12))
    result = grid_search(grid, scenario, [1])
    assert result.best.point == (30, 12)
    expected = simulate(grid.apply(scenario, (30, 12)), *scenario_streams(scenario, 1)).summary.avg_delay
    assert result.best.objective == pytest.approx(expected)


def test_grid_search_matches_brute_force():
    scenario = small_scenario(major=900, minor=350, horizon=900)
    grid = ParamGrid("typical_actuated", ValueRange(20, 60, 20), ValueRange(6, 14, 4))
    seeds = [derive_replication_seed(3, k) for k in range(3)]

    def evaluate(point):
        s = grid.apply(scenario, point)
        return float(np.mean([simulate(s, *scenario_streams(s, seed)).summary.avg_delay for seed in seeds]))

    best, value = brute_force_argmin(evaluate, grid.points())
    result = grid_search(grid, scenario, seeds)
    assert result.best.point == best
    assert result.best.objective == pytest.approx(value, rel=1e-12)
    assert all(row.objective >= result.best.objective for row in result.table)


def test_ties_go_to_first_point():
    # no minor demand: max greens never bind, every point scores the same
    scenario = small_scenario(major=500, minor=0)
    grid = ParamGrid("typical_actuated", ValueRange(30, 50, 10), ValueRange(10, 20, 10))
    result = grid_search(grid, scenario, [0, 1])
    assert len({row.objective for row in result.table}) == 1
    assert result.best.point == (30, 10)


def test_ql_grid_applies_parameters():
    scenario = small_scenario(major=700, minor=300)
    grid = ParamGrid("ql_based", ValueRange(20, 20), ValueRange(8, 8), ValueRange(2.0, 3.0, 1.0))
    result = grid_search(grid, scenario, [2])
    assert [row.point for row in result.table] == [(20, 8, 2.0), (20, 8, 3.0)]
    applied = grid.apply(scenario, (20, 8, 3.0))
    assert applied.control_type == "ql_based"
    assert (applied.adaptive.lb_major, applied.adaptive.lb_minor, applied.adaptive.beta) == (20, 8, 3.0)


def test_grid_rejects_invalid_point_before_running():
    # lower bound below the configured minimum green
    grid = ParamGrid("ql_based", ValueRange(5, 5), ValueRange(8, 8), ValueRange(2, 2))
    with pytest.raises(ValidationError):
        grid_search(grid, small_scenario(), [0])


def test_all_points_see_the_same_streams(monkeypatch):
    seen = []
    real = optimizer.simulate

    def spy(scenario, major, minor, trace=None):
        seen.append((major.fingerprint(), minor.fingerprint()))
        return real(scenario, major, minor)

    monkeypatch.setattr(optimizer, "simulate", spy)
    grid = ParamGrid("typical_actuated", ValueRange(20, 40, 10), ValueRange(8, 8))
    grid_search(grid, small_scenario(), [4, 5])
    assert len(seen) == 6
    assert seen[0::2] == [seen[0]] * 3 and seen[1::2] == [seen[1]] * 3
    assert seen[0] != seen[1]


def test_oversaturated_points_score_infinite():
    scenario = small_scenario(major=2500, minor=200, queue_cap=30)
    grid = ParamGrid("typical_actuated", ValueRange(20, 30, 10), ValueRange(6, 6))
    result = grid_search(grid, scenario, [0, 1])
    assert all(math.isinf(row.objective) and row.failures == 2 for row in result.table)


def test_grid_csv(tmp_path):
    grid = ParamGrid("typical_actuated", ValueRange(20, 30, 10), ValueRange(6, 6))
    result = grid_search(grid, small_scenario(), [0])
    write_grid_csv(result, tmp_path / "g.csv")
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 2
    assert {"gmax_major", "gmax_minor", "objective"} <= set(rows[0])


def test_parallel_grid_matches_serial():
    grid = ParamGrid("typical_actuated", ValueRange(20, 40, 10), ValueRange(8, 8))
    a = grid_search(grid, small_scenario(), [1], workers=1)
    b = grid_search(grid, small_scenario(), [1], workers=2)
    assert a.table == b.table


# -- paired comparisons ----------------------------------------------------------------

def test_identical_arms_show_zero_improvement():
    base = small_scenario(major=800, minor=300, control_type="ql_based")
    _, _, imp = run_pair(base, base, [0, 1, 2])
    assert all(v == 0 for v in imp.values())


def test_pair_uses_common_streams():
    base = small_scenario(major=800, minor=300)
    alt = base.with_(control_type="ql_based")
    b, a, imp = run_pair(base, alt, [7])
    sb = simulate(base, *scenario_streams(base, 7)).summary
    sa = simulate(alt, *scenario_streams(base, 7)).summary
    assert b["avg_delay"] == sb.avg_delay and a["avg_delay"] == sa.avg_delay
    assert imp["avg_delay"] == pytest.approx(100 * (sb.avg_delay - sa.avg_delay) / sb.avg_delay)


def test_plan_seeds_are_reproducible():
    plan = SensitivityPlan(replications=4, base_seed=9)
    assert plan.seeds() == SensitivityPlan(replications=4, base_seed=9).seeds()
    assert len(set(plan.seeds())) == 4


def test_plan_validation():
    with pytest.raises(ValidationError):
        SensitivityPlan(replications=0).validate()
    with pytest.raises(ValidationError):
        SensitivityPlan(profiles=(7,)).validate()
    with pytest.raises(ValidationError):
        SensitivityPlan(scale_pairs=((1.0, -1.0),)).validate()


def test_sensitivity_records_failed_cell_and_continues(tmp_path):
    # doubled major demand exceeds the upstream signal's capacity
    plan = SensitivityPlan(profiles=(1,), scale_pairs=((2.0, 1.0), (0.8, 0.8)), replications=1,
                           arrival_types=("platoon",))
    cells = run_sensitivity(plan)
    assert len(cells) == 2
    assert "upstream" in cells[0].error
    assert not cells[1].error and cells[1].improvement
    write_sensitivity_csv(cells, tmp_path / "s.csv", "platoon")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert rows[0]["error"] and not rows[1]["error"]
    assert rows[1]["scale"] == "-20%-20%"
    summary = average_improvements(cells)
    assert [r["measure"] for r in summary] == ["avg_delay", "n_stops", "avg_queue"]
    assert all(r["cells"] == 1 for r in summary)
    write_improvements_csv(summary, tmp_path / "i.csv")
    assert len(list(csv.DictReader(open(tmp_path / "i.csv")))) == 3


def test_sensitivity_is_reproducible():
    plan = SensitivityPlan(profiles=(2,), scale_pairs=((0.8, 0.8),), replications=2,
                           arrival_types=("random",))
    a = run_sensitivity(plan)
    b = run_sensitivity(plan)
    assert a == b
