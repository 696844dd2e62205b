"""Reference demand profiles and tuned signal parameters for the three test profiles."""

from .core import ActuatedParams, AdaptiveParams, DemandProfile, ScenarioConfig, UpstreamSignal

# (duration s, major vph, minor vph) per 15-minute interval
PROFILES = {
    1: DemandProfile.from_rows([(900, 800, 300), (900, 1350, 400), (900, 1350, 400), (900, 800, 300)]),
    2: DemandProfile.from_rows([(900, 1200, 100), (900, 1400, 200), (900, 1500, 300), (900, 1100, 100)]),
    3: DemandProfile.from_rows([(900, 800, 300), (900, 1500, 400), (900, 900, 200), (900, 500, 100)]),
}

# typical actuated max greens (s)
TYPICAL_GMAX = {1: (75.0, 15.0), 2: (70.0, 20.0), 3: (60.0, 20.0)}

# queue-length based (beta, LB major s, LB minor s)
QL_PARAMS = {1: (2.5, 55.0, 10.0), 2: (2.5, 75.0, 10.0), 3: (2.5, 55.0, 10.0)}

UB_SECONDS = 300.0

# shared by both control methods
BASE_ACTUATED = dict(gmin_major=10.0, gmin_minor=5.0, yellow=2.0, all_red=1.0, gap_out=3.0)

# (major scale, minor scale) in scenario order 1..4
SCALE_PAIRS = ((1.2, 1.2), (1.2, 0.8), (0.8, 1.2), (0.8, 0.8))


def actuated_params(profile: int) -> ActuatedParams:
    gmax_major, gmax_minor = TYPICAL_GMAX[profile]
    return ActuatedParams(gmax_major=gmax_major, gmax_minor=gmax_minor, **BASE_ACTUATED)


def adaptive_params(profile: int) -> AdaptiveParams:
    beta, lb_major, lb_minor = QL_PARAMS[profile]
    return AdaptiveParams(beta=beta, lb_major=lb_major, lb_minor=lb_minor, ub=UB_SECONDS)


def make_scenario(profile: int, scale=(1.0, 1.0), arrival_type="random",
                  control_type="ql_based", **overrides) -> ScenarioConfig:
    """Scenario for a reference profile with its tuned parameters attached.

    Both parameter sets are always present so the same config can be flipped
    between control types.
    """
    scenario = ScenarioConfig(
        demand=PROFILES[profile],
        actuated=actuated_params(profile),
        adaptive=adaptive_params(profile),
        upstream=UpstreamSignal(),
        arrival_type=arrival_type,
        control_type=control_type,
        demand_scale_major=scale[0],
        demand_scale_minor=scale[1],
        **overrides,
    )
    scenario.validate()
    return scenario


def scenario_label(profile: int, pair_index: int) -> str:
    """``"1-1"`` style label; ``pair_index`` is 0-based into SCALE_PAIRS."""
    return f"{profile}-{pair_index + 1}"


def scale_label(scale) -> str:
    return "".join(f"{round((s - 1.0) * 100):+d}%" for s in scale)
