from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spshds.config import build_system
from spshds.core import SelectionBundle
from spshds.errors import ConfigurationError, EventBracketError, PreconditionError
from spshds.flow import FlowConfig, integrate_flow, localize_event, select_flow_value
from spshds.streams import ForcedStream, RandomStream

from conftest import rk4_reference, scalar_system, tracker_field


def test_equilibrium_gives_constant_segment(tracker):
    seg = integrate_flow(tracker.system, [0.0, 0.0], 0.3, FlowConfig(T_max=1.0))
    assert np.all(seg.states == 0.0)
    assert seg.terminal_reason == "reached_T_max" and seg.times[-1] == pytest.approx(1.0)


def test_tracker_segment_matches_reference_integrator(tracker):
    cfg = FlowConfig(h_base=0.01, T_max=1.0)
    seg = integrate_flow(tracker.system, [0.5, 0.5], 0.1, cfg)
    ref = rk4_reference(tracker_field(0.1), [0.5, 0.5], 1.0, cfg.step(0.1) / 100)
    assert np.max(np.abs(seg.final_state - ref)) <= 1e-6


def test_start_in_jump_set_terminates_immediately(tracker):
    seg = integrate_flow(tracker.system, [1.05, 1.05], 0.1, FlowConfig())
    assert seg.terminal_reason == "entered_jump_set" and seg.times.size == 1 and seg.times[0] == 0.0


def test_flow_outside_flow_set_is_rejected():
    sys = scalar_system(1.0, flow_set={"le": {"-": ["x1", 1.0]}})
    with pytest.raises(PreconditionError, match="flow started outside flow set"):
        integrate_flow(sys, [2.0, 0.0], 1.0, FlowConfig())


def test_leaving_flow_set_is_reported():
    sys = scalar_system(1.0, flow_set={"le": {"-": ["x1", 1.0]}})
    seg = integrate_flow(sys, [0.0, 0.0], 1.0, FlowConfig(h_base=0.03, T_max=5.0))
    assert seg.terminal_reason == "left_flow_set"
    assert np.all(seg.states[:, 0] <= 1.0 + 1e-9)
    assert seg.final_state[0] == pytest.approx(1.0, abs=1e-8)


def test_jump_set_entry_is_localized(tracker):
    sys = scalar_system(1.0, jump_set={"le": {"-": [1.0, "x1"]}})
    cfg = FlowConfig(h_base=0.07, tol_event=1e-10)
    seg = integrate_flow(sys, [0.0, 0.0], 1.0, cfg)
    assert seg.terminal_reason == "entered_jump_set"
    assert seg.times[-1] == pytest.approx(1.0, abs=1e-9)
    assert sys.D.member(seg.states[-1:], cfg.tol_event)[0]
    assert not sys.D.member(seg.states[:-1]).any()


def test_blow_up_is_a_terminal_reason():
    sys = scalar_system({"^": ["x1", 2]})
    seg = integrate_flow(sys, [1.0, 0.0], 1.0, FlowConfig(h_base=1e-3, T_max=2.0))
    assert seg.terminal_reason == "blow_up"
    assert seg.times[-1] < 1.01


def test_localize_event_linear_crossing():
    sys = scalar_system(1.0, jump_set={"le": {"-": [1.0, "x1"]}})
    t, y = localize_event(sys, [0.9, 0.0], 0.25, 1.0, sys.D, 1e-10)
    assert t == pytest.approx(0.1, abs=1e-10)
    assert y[0] >= 1.0


def test_localize_event_degenerate_and_invalid():
    sys_up = scalar_system(1.0, jump_set={"le": {"-": [1.0, "x1"]}})
    t, y = localize_event(sys_up, [1.2, 0.0], 0.25, 1.0, sys_up.D, 1e-10)
    assert t == 0.0 and y[0] == 1.2
    sys_down = scalar_system(-1.0, jump_set={"le": {"-": [1.0, "x1"]}})
    with pytest.raises(EventBracketError, match="event bracket invalid"):
        localize_event(sys_down, [0.9, 0.0], 0.25, 1.0, sys_down.D, 1e-10)


def test_select_flow_value_policies():
    single = SelectionBundle([[2.0]])
    for policy in ("first", 0, "random"):
        assert select_flow_value(single, policy, ForcedStream([0.7]))[0] == 2.0
    pair = SelectionBundle([[1.0], [5.0]])
    assert select_flow_value(pair, 1)[0] == 5.0
    assert select_flow_value(pair, "index:1")[0] == 5.0
    with pytest.raises(ConfigurationError):
        select_flow_value(pair, 2)
    s = ForcedStream([0.1, 0.9, 0.6, 0.2])
    assert [select_flow_value(pair, "random-per-step", s)[0] for _ in range(4)] == [1.0, 5.0, 5.0, 1.0]


def test_random_selection_is_reproducible():
    sys = build_system({"n1": 1, "n2": 1, "flow_x": {"selections": [[1.0], [-1.0]], "convexified": True},
                        "flow_z": [0.0], "qss": ["x1"]})
    cfg = FlowConfig(h_base=0.1, T_max=1.0, selection_policy="random")
    a = integrate_flow(sys, [0.0, 0.0], 1.0, cfg, RandomStream(3, 0, 3))
    b = integrate_flow(sys, [0.0, 0.0], 1.0, cfg, RandomStream(3, 0, 3))
    assert np.array_equal(a.states, b.states) and a.uniforms_used == b.uniforms_used > 0
    c = integrate_flow(sys, [0.0, 0.0], 1.0, cfg, RandomStream(4, 0, 3))
    assert not np.array_equal(a.states, c.states)


@given(x=st.floats(-2.5, 2.5), z=st.floats(-2.5, 2.5), eps=st.sampled_from([0.05, 0.3, 1.0]))
def test_kernel_and_generic_paths_agree(tracker, x, z, eps):
    y0 = [x, z]
    if tracker.system.D.member(np.array([y0]))[0]:
        return
    k = integrate_flow(tracker.system, y0, eps, FlowConfig(T_max=0.5, backend="kernel"))
    g = integrate_flow(tracker.system, y0, eps, FlowConfig(T_max=0.5, backend="generic"))
    assert k.terminal_reason == g.terminal_reason
    assert np.array_equal(k.times, g.times)
    assert np.allclose(k.states, g.states, rtol=0, atol=1e-12)


@given(x=st.floats(-0.99, 0.99), z=st.floats(-3, 3))
def test_segment_nodes_stay_in_flow_set_and_end_in_jump_set(tracker, x, z):
    cfg = FlowConfig(T_max=3.0)
    seg = integrate_flow(tracker.system, [x, z], 0.2, cfg)
    assert tracker.system.C.member(seg.states, cfg.tol_set).all()
    if seg.terminal_reason == "entered_jump_set":
        assert tracker.system.D.member(seg.states[-1:], cfg.tol_event)[0]


def test_flow_determinism(tracker):
    a = integrate_flow(tracker.system, [0.7, -2.0], 0.1, FlowConfig(T_max=2.0))
    b = integrate_flow(tracker.system, [0.7, -2.0], 0.1, FlowConfig(T_max=2.0))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


def test_step_shrinks_with_epsilon():
    cfg = FlowConfig(h_base=0.02, fast_substep_factor=2)
    assert cfg.step(1.0) == 0.01 and cfg.step(0.1) == pytest.approx(0.001)
    with pytest.raises(ConfigurationError):
        FlowConfig(h_base=-1.0)
