import numpy as np
import pytest
from hypothesis import given, strategies as st

from qlsignal.arrivals import (
    ArrivalStream, platoon_arrivals, poisson_arrivals, probe_tag, scenario_streams,
    upstream_departures,
)
from qlsignal.core import DemandProfile, UpstreamSignal
from qlsignal.errors import ValidationError
from qlsignal.fixtures import PROFILES, make_scenario


def test_mean_count_matches_integrated_rate():
    demand = PROFILES[1]
    counts = [len(poisson_arrivals(demand, "major", seed=s)) for s in range(200)]
    expected = (800 + 1350 + 1350 + 800) / 4
    se = np.sqrt(expected / 200)
    assert abs(np.mean(counts) - expected) < 4.5 * se
    # Poisson: variance close to the mean
    assert 0.7 < np.var(counts) / np.mean(counts) < 1.3


def test_interval_counts_follow_each_rate():
    demand = DemandProfile.from_rows([(1800, 360, 0), (1800, 1440, 0)])
    first, second = [], []
    for s in range(100):
        t = poisson_arrivals(demand, "major", seed=s).times
        first.append(np.sum(t < 1800))
        second.append(np.sum(t >= 1800))
    assert abs(np.mean(first) - 180) < 4.5 * np.sqrt(180 / 100)
    assert abs(np.mean(second) - 720) < 4.5 * np.sqrt(720 / 100)


def test_split_interval_leaves_stream_unchanged():
    # the unit-exponential clock carries across boundaries, so splitting a
    # constant-rate interval must not change a single arrival
    whole = DemandProfile.from_rows([(3600, 900, 0)])
    split = DemandProfile.from_rows([(1000, 900, 0), (1700, 900, 0), (900, 900, 0)])
    a = poisson_arrivals(whole, "major", seed=11).times
    b = poisson_arrivals(split, "major", seed=11).times
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_zero_rate_interval_has_no_arrivals():
    demand = DemandProfile.from_rows([(600, 900, 0), (600, 0, 0), (600, 900, 0)])
    t = poisson_arrivals(demand, "major", seed=3).times
    assert not np.any((t >= 600) & (t < 1200))
    assert len(poisson_arrivals(demand, "minor", seed=3)) == 0


def test_scale_multiplies_rate():
    demand = DemandProfile.from_rows([(3600, 500, 0)])
    base = np.mean([len(poisson_arrivals(demand, "major", 1.0, seed=s)) for s in range(100)])
    up = np.mean([len(poisson_arrivals(demand, "major", 1.2, seed=s)) for s in range(100)])
    assert abs(up / base - 1.2) < 0.05


def test_same_seed_same_stream():
    a = poisson_arrivals(PROFILES[2], "minor", seed=(5, 1))
    b = poisson_arrivals(PROFILES[2], "minor", seed=(5, 1))
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != poisson_arrivals(PROFILES[2], "minor", seed=(6, 1)).fingerprint()


def test_arrivals_inside_horizon_and_sorted():
    t = poisson_arrivals(PROFILES[3], "major", horizon=1000, seed=1).times
    assert np.all(np.diff(t) >= 0)
    assert t.max() < 1000


def test_upstream_departures_respect_green_and_headway():
    up = UpstreamSignal()
    origin = np.sort(np.random.default_rng(0).uniform(0, 3600, 1500))
    d = upstream_departures(origin, up, 2.0)
    assert np.all(d >= origin)
    assert np.all((d - up.offset) % up.cycle < up.green_major + 1e-9)
    assert np.all(np.diff(d) >= 2.0 / up.lanes - 1e-9)


def test_platoon_without_jitter_lands_in_shifted_green():
    up = UpstreamSignal(jitter_sd=0.0)
    t = platoon_arrivals(PROFILES[1], 1.0, up, seed=2).times
    phase = (t - up.travel_time) % up.cycle
    phase[np.isclose(phase, up.cycle)] = 0.0  # float wrap at green start
    assert np.all(phase < up.green_major + 1e-6)
    assert t.min() >= up.travel_time


def test_platoon_jitter_is_bounded():
    up = UpstreamSignal(jitter_sd=2.0)
    t = platoon_arrivals(PROFILES[1], 1.0, up, seed=2).times
    phase = (t - up.travel_time) % up.cycle
    # departures fall in [0, 60); jitter is clipped at 3 sd = 6 s
    assert np.all((phase < up.green_major + 6 + 1e-6) | (phase > up.cycle - 6 - 1e-6))


def test_platoon_preserves_volume_roughly():
    counts = [len(platoon_arrivals(PROFILES[1], 1.0, UpstreamSignal(), seed=s)) for s in range(30)]
    # minus the tail still travelling at the horizon
    assert 1000 < np.mean(counts) < 1080


def test_platoon_over_capacity_rejected():
    with pytest.raises(ValidationError) as info:
        platoon_arrivals(PROFILES[1], 2.0, UpstreamSignal(), seed=0)
    assert info.value.field == "upstream"


def test_probe_tag_extremes_and_rate():
    stream = poisson_arrivals(PROFILES[1], "major", seed=0)
    assert not probe_tag(stream, 0.0, 1).is_probe.any()
    assert probe_tag(stream, 1.0, 1).is_probe.all()
    tagged = probe_tag(stream, 0.3, 1)
    assert np.array_equal(tagged.times, stream.times)
    assert abs(tagged.is_probe.mean() - 0.3) < 0.05
    with pytest.raises(ValueError):
        probe_tag(stream, 1.5)


def test_stream_rejects_unsorted_times():
    with pytest.raises(ValueError):
        ArrivalStream(np.array([2.0, 1.0]), np.array([False, False]))


def test_stream_arrays_are_read_only():
    stream = ArrivalStream(np.array([1.0, 2.0]), np.array([True, False]))
    with pytest.raises(ValueError):
        stream.times[0] = 5.0


def test_csv_round_trip(tmp_path):
    stream = probe_tag(poisson_arrivals(PROFILES[1], "minor", seed=4), 0.5, 4)
    stream.to_csv(tmp_path / "a.csv")
    back = ArrivalStream.from_csv(tmp_path / "a.csv")
    assert back.fingerprint() == stream.fingerprint()


def test_scenario_streams_identical_across_control_types():
    typ = make_scenario(1, (1.2, 1.2), "platoon", control_type="typical_actuated")
    ql = typ.with_(control_type="ql_based")
    a = scenario_streams(typ, 123)
    b = scenario_streams(ql, 123)
    assert [s.fingerprint() for s in a] == [s.fingerprint() for s in b]


def test_scenario_streams_minor_independent_of_major_type():
    random = make_scenario(1, arrival_type="random")
    platoon = random.with_(arrival_type="platoon")
    assert scenario_streams(random, 9)[1].fingerprint() == scenario_streams(platoon, 9)[1].fingerprint()


@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_probe_tag_never_changes_times(p, seed):
    stream = poisson_arrivals(DemandProfile.from_rows([(300, 600, 0)]), "major", seed=seed)
    tagged = probe_tag(stream, p, seed)
    assert np.array_equal(tagged.times, stream.times)
