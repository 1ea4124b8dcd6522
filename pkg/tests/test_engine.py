import math

import numpy as np
import pytest
from hypothesis import HealthCheck, Phase, given, settings
from hypothesis import strategies as st

from stickslip.engine import (
    DivergenceDetected,
    Limits,
    PhaseKind,
    Termination,
    dissipation_increment,
    simulate,
    stiction_energy,
)
from stickslip.model import FrictionParams, Gains, State, build_system
from stickslip.slip import ChatterDetected
from stickslip.stiction import holds_at_rest, in_stiction

EX2 = Gains(20, 100, 1000)


def run(gains, fc, x0, t_max, rate=200.0, **kw):
    return simulate(State(*x0), gains, FrictionParams(fc), Limits(t_max=t_max, **kw), rate)


@pytest.fixture(scope="module")
def ex2a():
    return run(EX2, 50, (0, -1.1, 0), 120)


def test_stiction_energy():
    assert stiction_energy(State(0, 0, 5), EX2) == 0.0
    assert stiction_energy(State(0.01, 0.1, 0), EX2) == pytest.approx(0.55)
    x = State(0.3, -0.2, 1.0)
    assert stiction_energy(x, EX2.scaled(3.0)) == pytest.approx(3 * stiction_energy(x, EX2))


def test_dissipation_increment():
    assert dissipation_increment(0.0, 5.0, 1.0) == 0.0
    assert dissipation_increment(3.0, 0.0, 1.0) == 0.0
    assert dissipation_increment(2.0, 1.0, 0.5) == 1.0
    assert dissipation_increment(-2.0, 1.0, 0.5) == 1.0
    with pytest.raises(ValueError):
        dissipation_increment(1.0, 1.0, -0.1)


def test_limits_validated():
    with pytest.raises(ValueError):
        Limits(t_max=0)
    with pytest.raises(ValueError):
        Limits(t_max=1, max_cycles=0)


def test_segments_alternate_and_join(ex2a):
    segs = ex2a.segments
    for a, b in zip(segs, segs[1:]):
        assert a.kind is not b.kind
        assert a.t_end == b.t_start
        assert a.state_end == b.state_start
    for s in segs[:-1]:
        assert s.t_end > s.t_start


def test_stick_segments_are_sliding(ex2a):
    for s in ex2a.sticks():
        assert np.all(s.states[:, 2] == 0.0)
        assert np.all(s.states[:, 1] == s.state_start.x2)
        expected = s.state_start.x1 + s.state_start.x2 * (s.times - s.t_start)
        np.testing.assert_allclose(s.states[:, 0], expected, rtol=0, atol=1e-15)


def test_cycle_count_is_stick_exits(ex2a):
    kinds = [s.kind for s in ex2a.segments]
    transitions = sum(1 for a, b in zip(kinds, kinds[1:]) if a is PhaseKind.STICK and b is PhaseKind.SLIP)
    assert ex2a.cycle_count == transitions == 10


def test_energy_down_at_onsets_up_while_stuck(ex2a):
    v = ex2a.energy.v_at_stick_onsets
    assert all(b < a for a, b in zip(v, v[1:]))


def test_energy_rises_during_rhombus_sticks():
    # Example 3 lands inside the rhombus every time
    g = Gains(10, 1040, 8000)
    tr = run(g, 100, (0, -0.15, 0), 10.0)
    done = [s for s in tr.sticks() if not (s.open_ended or s.truncated)]
    assert len(done) >= 10
    for s, v_exit in zip(done, tr.energy.v_at_stick_exits):
        assert in_stiction(s.state_start, tr.system)
        assert v_exit > stiction_energy(s.state_start, g)


def test_off_diagonal_stick_can_lose_energy(ex2a):
    # a landing with x1 and x2 of opposite signs moves |x1| towards zero first
    s = ex2a.sticks()[0]
    assert s.state_start.x1 * s.state_start.x2 < 0
    assert ex2a.energy.v_at_stick_exits[0] < stiction_energy(s.state_start, EX2)


def test_landings_balance_and_exits(ex2a):
    system = ex2a.system
    for s in ex2a.sticks():
        assert holds_at_rest(s.state_start, system)
        if s.open_ended or s.truncated:
            continue
        x = s.state_end
        if system.kp * abs(x.x2) <= system.fc:
            # exits of rhombus entries sit on its edge
            assert abs(system.ki * x.x1) + abs(system.kp * x.x2) == pytest.approx(system.fc, rel=1e-10)
        else:
            assert abs(system.ki * x.x1 + system.kp * x.x2) == pytest.approx(system.fc, rel=1e-10)


def test_landings_outside_rhombus_are_off_diagonal(ex2a):
    system = ex2a.system
    for s in ex2a.sticks():
        x = s.state_start
        if not in_stiction(x, system):
            assert x.x1 * x.x2 < 0


def test_dissipation_monotone_and_matches_quadrature(ex2a):
    d = np.array(ex2a.energy.dissipated)
    assert np.all(np.diff(d) >= 0)
    t, x, _, _ = ex2a.sampled()
    fine = run(EX2, 50, (0, -1.1, 0), 3.0, rate=20000.0)
    t, x, _, _ = fine.sampled()
    quad = np.trapezoid(50 * np.abs(x[:, 2]), t)
    assert fine.energy.dissipated_total == pytest.approx(quad, rel=1e-5)


def test_ellipse_axes_follow_exit_energy(ex2a):
    g = EX2
    for (a, b), v in zip(ex2a.energy.ellipse_axes, ex2a.energy.v_at_stick_exits):
        assert a == pytest.approx(math.sqrt(2 * v / g.kp))
        assert b == pytest.approx(math.sqrt(2 * v / g.ki))


def test_ellipse_bound_on_rhombus_exits(ex2a):
    system = ex2a.system
    g = EX2
    for s, v in zip(ex2a.sticks(), ex2a.energy.v_at_stick_exits):
        if system.kp * abs(s.state_end.x2) <= system.fc:
            assert v <= 50**2 / (2 * min(g.kp, g.ki)) * (1 + 1e-12)


def test_example3_keeps_sign():
    tr = run(Gains(10, 1040, 8000), 100, (0, -0.15, 0), 10.0)
    assert tr.termination is Termination.CONVERGED_TO_LAMBDA
    onsets = tr.stick_onsets()
    signs = {math.copysign(1, x.x2) for _, x in onsets}
    assert signs == {1.0}
    assert abs(onsets[-1][1].x2) <= tr.limits.resolved_eps(tr.system)


def test_example5_periods_grow():
    tr = simulate(State(0, -0.5, 0), EX2, FrictionParams(50), Limits(t_max=1e5), 1.0)
    durations = tr.completed_stick_durations()
    assert len(durations) >= 10
    assert all(b > a for a, b in zip(durations, durations[1:]))
    dist = [x.norm() for _, x in tr.stick_onsets()]
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_frictionless_stable_converges_without_sticking():
    tr = run(EX2, 0.0, (0.1, -0.5, 2.0), 60.0)
    assert tr.sticks() == []
    assert tr.cycle_count == 0
    assert tr.termination is Termination.CONVERGED_TO_LAMBDA
    assert tr.final_state.norm() < 1e-12


def test_ki_zero_first_stick_is_terminal():
    tr = run(Gains(0, 1, 0), 0.5, (0.0, 1.0, 0.1), 50.0)
    assert tr.termination is Termination.NEVER_EXIT_STICK
    assert len(tr.sticks()) == 1 and tr.sticks()[0].open_ended
    assert tr.cycle_count == 0
    assert len(tr.relay_flips()) == 1


def test_max_cycles():
    tr = run(EX2, 50, (0, -1.1, 0), 120, max_cycles=3)
    assert tr.termination is Termination.MAX_CYCLES
    assert tr.cycle_count == 3


def test_divergence_carries_trace():
    with pytest.raises(DivergenceDetected) as info:
        run(Gains(0, 100, 1), 0.0, (0, 0, 10), 1e4, divergence_bound=20.0)
    assert info.value.trace is not None
    assert info.value.trace.termination is Termination.DIVERGENCE_DETECTED


def test_chatter_detection():
    with pytest.raises(ChatterDetected) as info:
        run(Gains(0, 100, 1), 1.0, (0, 0, 10), 60, chatter_flips=3, chatter_span=10.0)
    assert info.value.trace.termination is Termination.CHATTER_DETECTED


def test_start_inside_stick_set():
    tr = run(EX2, 50, (0.01, 0.3, 0.0), 5.0)
    first = tr.segments[0]
    assert first.kind is PhaseKind.STICK
    # breakaway at x1 = 0.3 (50/0.3 - 100) / 1000 = 0.02
    assert first.t_end == pytest.approx((0.02 - 0.01) / 0.3)


def test_sampling_and_events(ex2a):
    t, x, phases, us = ex2a.sampled()
    assert np.all(np.diff(t) > 0)
    assert t[0] == 0.0 and t[-1] == 120.0
    assert set(phases) == {"stick", "slip"}
    assert all((u is None) == (p == "stick") for u, p in zip(us, phases))
    ev = ex2a.events()
    assert ev[0][0] == "start" and ev[-1][0] == "end"
    assert [e[1] for e in ev] == sorted(e[1] for e in ev)
    np.testing.assert_allclose(ex2a.states_at(t), x, rtol=1e-12, atol=1e-14)


def test_trace_state_lookup(ex2a):
    s = ex2a.sticks()[1]
    mid = 0.5 * (s.t_start + s.t_end)
    assert ex2a.state_at(mid).x3 == 0.0
    with pytest.raises(ValueError):
        ex2a.state_at(121.0)


stable = st.tuples(st.floats(1, 60), st.floats(1, 1200), st.floats(0.5, 5000)).filter(
    lambda g: g[0] * g[1] > g[2] * 1.01
)


@settings(max_examples=25, deadline=None, phases=[Phase.explicit, Phase.reuse, Phase.generate],
          suppress_health_check=[HealthCheck.filter_too_much])
@given(g=stable, fc=st.floats(1, 100), x0=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-5, 5)))
def test_global_attraction(g, fc, x0):
    gains = Gains(*g)
    system = build_system(gains, FrictionParams(fc))
    x = State(*x0)
    tr = simulate(x, gains, FrictionParams(fc), Limits(t_max=2000.0, max_cycles=5), 1.0)
    if in_stiction(x, system) or tr.sticks():
        return
    # no landing: the slip must be creeping onto a corner of the stick set
    end = tr.final_state
    assert abs(end.x3) <= 1e-6 * max(1.0, fc / system.kp)
    assert abs(system.ki * end.x1) + abs(system.kp * end.x2) <= fc * (1 + 1e-6)


def test_corner_creep_without_landing():
    tr = run(Gains(1.0, 417.0, 20.0), 1.0, (1.0, 0.0, 0.0), 2000.0)
    assert tr.sticks() == []
    assert abs(tr.final_state.x1) == pytest.approx(1.0 / 20.0, rel=1e-9)
