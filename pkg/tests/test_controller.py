import pytest
from hypothesis import assume, given, strategies as st

from qlsignal.controller import (
    ALL_RED, EXTENSION_GREEN, MIN_GREEN, YELLOW, DetectorInput, PhaseState, QueueSnapshot,
    adaptive_max_green, controller_step, cycle_max_green_update, indication_for,
)
from qlsignal.core import ActuatedParams, AdaptiveParams

DT = 0.1
PARAMS = ActuatedParams()  # gmin 10/5, gmax 75/15, yellow 2, all-red 1, gap 3


def drive(inputs, n_ticks, gmax=75.0, params=PARAMS, state=None):
    """Step the controller; ``inputs(tick, state)`` gives that tick's detectors.

    Returns the list of states after each tick and the indications emitted.
    """
    state = state or PhaseState()
    states, shown = [], []
    for n in range(n_ticks):
        state, ind = controller_step(state, inputs(n, state), params, gmax, DT)
        states.append(state)
        shown.append(ind)
    return states, shown


def first_tick(states, predicate):
    return next(i for i, s in enumerate(states) if predicate(s))


def test_rests_in_major_green_without_conflicting_call():
    states, _ = drive(lambda n, s: DetectorInput(), 5000)
    assert all(s.active_approach == "major" and s.is_green for s in states)


def test_gap_out_at_min_green_when_minor_calls():
    # no major actuation, constant minor call: green ends exactly at gmin
    states, shown = drive(lambda n, s: DetectorInput(call_minor=True), 200)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert k == 99  # 100th tick -> 10.0 s of green
    assert states[k].green_elapsed == 100
    assert shown[k].gap_out and not shown[k].max_out


def test_yellow_and_all_red_durations_then_minor_green():
    states, _ = drive(lambda n, s: DetectorInput(call_minor=True), 200)
    y = first_tick(states, lambda s: s.stage == YELLOW)
    r = first_tick(states, lambda s: s.stage == ALL_RED)
    g = first_tick(states, lambda s: s.active_approach == "minor")
    assert r - y == 20
    assert g - r == 10
    assert states[g].stage == MIN_GREEN


def test_max_out_after_gmax_of_conflicting_demand():
    inputs = lambda n, s: DetectorInput(call_minor=True, actuation_major=True)
    states, shown = drive(inputs, 1000)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert states[k].green_elapsed == 750
    assert shown[k].max_out


def test_countdown_starts_with_the_conflicting_call():
    inputs = lambda n, s: DetectorInput(call_minor=n >= 500, actuation_major=True)
    states, _ = drive(inputs, 2000)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert states[k].green_elapsed == 500 + 750


def test_countdown_pauses_and_resumes():
    # call on [100, 400), off [400, 600), on from 600: 300 ticks used, 450 left
    inputs = lambda n, s: DetectorInput(call_minor=(100 <= n < 400) or n >= 600, actuation_major=True)
    states, _ = drive(inputs, 3000)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert states[k].green_elapsed == 600 + 450


def test_gap_without_conflict_does_not_end_green():
    # long gap while minor is quiet; once minor calls, green ends on that tick
    inputs = lambda n, s: DetectorInput(call_minor=n >= 500)
    states, shown = drive(inputs, 1000)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert k == 500 and shown[k].gap_out


def test_actuations_extend_green_within_gap():
    # major actuation every 2.9 s keeps the gap timer below 3 s until max-out
    inputs = lambda n, s: DetectorInput(call_minor=True, actuation_major=n % 29 == 0)
    states, shown = drive(inputs, 1200)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert shown[k].max_out


def test_gap_out_after_actuations_stop():
    inputs = lambda n, s: DetectorInput(call_minor=True, actuation_major=n < 300)
    states, shown = drive(inputs, 1200)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    # last actuation on tick 299, gap reaches 30 ticks on tick 329
    assert k == 329 and shown[k].gap_out


def test_min_green_is_never_cut_short():
    inputs = lambda n, s: DetectorInput(call_minor=True, call_major=True)
    states, _ = drive(inputs, 5000)
    greens = [states[i].green_elapsed for i in range(1, len(states))
              if states[i - 1].is_green and states[i].stage == YELLOW]
    assert len(greens) > 10
    # alternate approaches: even entries are major (10 s), odd minor (5 s)
    assert all(g >= 100 for g in greens[0::2]) and all(g >= 50 for g in greens[1::2])


def test_minor_returns_to_major_on_major_call():
    inputs = lambda n, s: DetectorInput(call_minor=True, call_major=s.active_approach == "minor")
    states, _ = drive(inputs, 400)
    minor_start = first_tick(states, lambda s: s.active_approach == "minor")
    back = first_tick(states[minor_start:], lambda s: s.active_approach == "major")
    # 5 s min green, 2 s yellow, 1 s all red
    assert back == 80


def test_indications_never_conflict():
    inputs = lambda n, s: DetectorInput(call_minor=n % 7 < 4, call_major=n % 11 < 6,
                                        actuation_major=n % 13 == 0, actuation_minor=n % 17 == 0)
    states, shown = drive(inputs, 20000)
    for ind in shown:
        assert ind.major == "red" or ind.minor == "red"
    for s in states:
        i = indication_for(s)
        assert not (i.major == "green" and i.minor == "green")


def test_max_green_is_armed_from_active_value():
    inputs = lambda n, s: DetectorInput(call_minor=True, actuation_major=True)
    states, _ = drive(inputs, 1000, gmax=30.0)
    k = first_tick(states, lambda s: s.stage == YELLOW)
    assert states[k].green_elapsed == 300


def test_extension_stage_entered_after_gmin():
    states, _ = drive(lambda n, s: DetectorInput(actuation_major=True), 150)
    assert states[98].stage == MIN_GREEN
    assert states[99].stage == EXTENSION_GREEN


# -- adaptive max green ------------------------------------------------------------

def test_adaptive_examples():
    assert adaptive_max_green(0, 0, 2.5, 55, 300) == 55
    assert adaptive_max_green(20, 10, 2.5, 10, 300) == pytest.approx(2.5 * 400 / 30)
    assert adaptive_max_green(1000, 0, 2.5, 10, 300) == 300
    assert adaptive_max_green(3, 30, 2.5, 10, 300) == 10


def test_adaptive_rejects_bad_inputs():
    with pytest.raises(ValueError):
        adaptive_max_green(-1, 0, 2.5, 10, 300)
    with pytest.raises(ValueError):
        adaptive_max_green(1, 0, 2.5, 400, 300)
    with pytest.raises(ValueError):
        adaptive_max_green(1, 0, 0.0, 10, 300)


def test_cycle_update_pairs_own_current_with_conflicting_previous():
    adaptive = AdaptiveParams(beta=2.0, lb_major=1, lb_minor=1, ub=300)
    now = QueueSnapshot(n_major=30, n_minor=8, cycle_index=4)
    prev = QueueSnapshot(n_major=20, n_minor=10, cycle_index=3)
    gm, gn = cycle_max_green_update(now, prev, adaptive)
    assert gm == pytest.approx(2.0 * 900 / 40)
    assert gn == pytest.approx(2.0 * 64 / 28)


counts = st.integers(0, 500)
bounds = st.tuples(st.floats(1, 200), st.floats(1, 400)).filter(lambda b: b[0] <= b[1])


@given(counts, counts, st.floats(0.1, 10), bounds)
def test_adaptive_within_bounds(n, m, beta, b):
    lb, ub = b
    g = adaptive_max_green(n, m, beta, lb, ub)
    assert lb <= g <= ub


@given(counts, counts, st.floats(0.1, 10), bounds)
def test_adaptive_monotone_in_own_queue(n, m, beta, b):
    lb, ub = b
    assert adaptive_max_green(n + 1, m, beta, lb, ub) >= adaptive_max_green(n, m, beta, lb, ub)


@given(st.integers(1, 500), counts, st.floats(0.1, 10))
def test_adaptive_unclamped_matches_formula(n, m, beta):
    raw = beta * n * n / (n + m)
    assume(1 < raw < 400)
    assert adaptive_max_green(n, m, beta, 1, 400) == pytest.approx(raw)
