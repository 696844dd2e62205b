import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

from qlsignal.core import ActuatedParams, AdaptiveParams, DemandProfile, ScenarioConfig  # noqa: E402

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def small_scenario(major=600.0, minor=200.0, horizon=600.0, **overrides) -> ScenarioConfig:
    demand = DemandProfile.from_rows([(horizon, major, minor)])
    kw = dict(demand=demand, horizon=horizon, actuated=ActuatedParams(),
              adaptive=AdaptiveParams(beta=2.5, lb_major=55, lb_minor=10, ub=300))
    kw.update(overrides)
    scenario = ScenarioConfig(**kw)
    scenario.validate()
    return scenario


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
