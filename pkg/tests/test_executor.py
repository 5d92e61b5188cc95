from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spshds.errors import ConfigurationError, NoSolutionError, PreconditionError
from spshds.executor import (
    BLOW_UP,
    COMPLETE,
    JUMP_BUDGET,
    STOPPED,
    ExecConfig,
    apply_jump,
    resolve_overlap,
    sample_jump_input,
    solve,
    solve_ensemble,
)
from spshds.flow import FlowConfig, integrate_flow
from spshds.core import FiniteSupport
from spshds.streams import ForcedStream, RandomStream, TrialStreams

from conftest import scalar_system


def forced(inputs, n=64):
    fill = [0.5] * n
    return TrialStreams(ForcedStream(inputs), ForcedStream(fill), ForcedStream(fill), ForcedStream(fill))


CFG = ExecConfig(FlowConfig(h_base=0.01), T_total=4.0)


def test_equilibrium_solution(tracker):
    rec = solve(tracker.system, [0.0, 0.0], 0.1, CFG)
    assert rec.n_jumps == 0 and rec.stop_reason == COMPLETE
    assert len(rec.arc.segments) == 1 and np.all(rec.arc.segments[0].states == 0.0)


def test_single_jump_then_flow(tracker):
    # uniform 0.5 < 0.9 selects v = 0.1
    rec = solve(tracker.system, [2.0, 2.0], 0.1, CFG, streams=forced([0.5]))
    jp = rec.arc.jump_points[0]
    assert rec.n_jumps == 1 and np.array_equal(jp.pre, [2.0, 2.0]) and np.allclose(jp.post, [0.2, 0.2])
    seg = integrate_flow(tracker.system, jp.post, 0.1, FlowConfig(h_base=0.01, T_max=3.0))
    assert np.array_equal(rec.arc.segments[1].states, seg.states)


def test_two_jumps(tracker):
    rec = solve(tracker.system, [2.0, 2.0], 0.1, CFG, streams=forced([0.95, 0.5]))
    posts = [jp.post for jp in rec.arc.jump_points]
    assert rec.n_jumps == 2
    assert np.allclose(posts[0], [2.4, 2.4]) and np.allclose(posts[1], [0.24, 0.24])
    assert rec.inputs[:, 0].tolist() == [1.2, 0.1]


def test_outside_domain_has_no_solution():
    sys = scalar_system(1.0, flow_set={"le": {"-": ["x1", 1.0]}})
    with pytest.raises(NoSolutionError, match="no solution from initial condition"):
        solve(sys, [3.0, 0.0], 1.0, CFG)


def test_stop_at_flow_set_boundary_is_flagged():
    sys = scalar_system(1.0, flow_set={"le": {"-": ["x1", 1.0]}})
    rec = solve(sys, [0.0, 0.0], 1.0, CFG)
    assert rec.stop_reason == STOPPED and rec.flags.get("left_flow_set")


def test_jump_budget_is_a_stop_reason():
    sys = scalar_system(0.0, jump_set="all", jump=["x1", "z1"])
    rec = solve(sys, [0.5, 0.5], 1.0, ExecConfig(J_max=7, T_total=100.0))
    assert rec.stop_reason == JUMP_BUDGET and rec.n_jumps == 7


def test_blow_up_stop_reason():
    sys = scalar_system({"^": ["x1", 2]})
    rec = solve(sys, [1.0, 0.0], 1.0, ExecConfig(FlowConfig(h_base=1e-3), T_total=3.0))
    assert rec.stop_reason == BLOW_UP


def test_apply_jump_examples(tracker):
    assert np.allclose(apply_jump(tracker.system, [1.0, 1.0], [0.1]), [0.1, 0.1])
    assert np.allclose(apply_jump(tracker.system, [1.0, 1.0], [1.2]), [1.2, 1.2])
    with pytest.raises(PreconditionError):
        apply_jump(tracker.system, [0.0, 0.0], [0.1])


def test_sample_jump_input_examples():
    d = FiniteSupport(np.array([0.1, 1.2]), np.array([0.9, 0.1]))
    assert sample_jump_input(d, ForcedStream([0.95]))[0] == 1.2
    c = FiniteSupport(np.array([7.0]), np.array([1.0]))
    s = RandomStream(1)
    assert all(sample_jump_input(c, s)[0] == 7.0 for _ in range(20))


def test_resolve_overlap_policies():
    assert resolve_overlap(None, "prefer_jump") == "jump"
    assert resolve_overlap(None, "prefer_flow") == "flow"
    s = RandomStream(0, 0, 2)
    assert all(resolve_overlap(None, "bernoulli(1.0)", s) == "jump" for _ in range(100))
    draws = [resolve_overlap(None, "bernoulli(0.5)", s) == "jump" for _ in range(10_000)]
    assert abs(np.mean(draws) - 0.5) <= 0.015
    with pytest.raises(ConfigurationError):
        ExecConfig(overlap_policy="bernoulli(2)")


def test_bernoulli_overlap_solution_is_valid():
    sys = scalar_system(-1.0, jump_set={"le": {"-": ["x1", 0.5]}}, jump=[{"+": ["x1", 1.0]}, "z1"])
    rec = solve(sys, [2.0, 0.0], 1.0, ExecConfig(FlowConfig(h_base=0.05), T_total=6.0,
                                                 overlap_policy="bernoulli(0.3)"), seed=5)
    rec.arc.check_domain()
    assert rec.n_jumps >= 1


@given(seed=st.integers(0, 2**31), x=st.floats(-3, 3), z=st.floats(-3, 3))
def test_arc_invariants(tracker, seed, x, z):
    cfg = ExecConfig(FlowConfig(h_base=0.02), T_total=5.0)
    rec = solve(tracker.system, [x, z], 0.2, cfg, seed=seed)
    rec.arc.check_domain()
    sys = tracker.system
    for jp, v in zip(rec.arc.jump_points, rec.inputs):
        assert sys.D.member(jp.pre[None], cfg.flow.tol_set)[0]
        bundle = sys.G.batch(jp.pre[None, :1], jp.pre[None, 1:], v[None])[0]
        assert np.any(np.all(bundle == jp.post, axis=1))
    for seg in rec.arc.segments:
        assert sys.C.member(seg.states, cfg.flow.tol_set).all()


@given(seed=st.integers(0, 2**31))
def test_truncation_replay_reproduces_prefix(noisy, seed):
    cfg = ExecConfig(FlowConfig(h_base=0.05), T_total=12.0)
    full = solve(noisy.system, [2.0, -1.0], 0.1, cfg, seed=seed)
    k = max(full.n_jumps - 1, 0)
    cut = solve(noisy.system, [2.0, -1.0], 0.1, ExecConfig(cfg.flow, J_max=k, T_total=12.0), seed=seed)
    assert np.array_equal(cut.inputs, full.inputs[:k])
    for a, b in zip(cut.arc.segments, full.arc.segments[:k]):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)


def test_seeds_change_only_jump_inputs(tracker):
    a = solve(tracker.system, [2.5, 2.5], 0.1, CFG, seed=1)
    b = solve(tracker.system, [2.5, 2.5], 0.1, CFG, seed=2)
    # the pre-jump flow (here empty) and any segment starting from equal states coincide
    for sa, sb in zip(a.arc.segments, b.arc.segments):
        if np.array_equal(sa.states[0], sb.states[0]) and sa.times[0] == sb.times[0]:
            assert np.array_equal(sa.states, sb.states)


def test_ensemble_is_independent_of_worker_count(noisy):
    y0s = [np.array([x, -x]) for x in np.linspace(-3, 3, 12)]
    cfg = ExecConfig(FlowConfig(h_base=0.05), T_total=6.0)
    prints = [[r.fingerprint() for r in solve_ensemble(noisy.system, y0s, 0.1, cfg, seed=9, workers=w)]
              for w in (1, 2, 8)]
    assert prints[0] == prints[1] == prints[2]


def test_record_csv_and_sidecar(tmp_path, tracker):
    rec = solve(tracker.system, [2.0, 2.0], 0.1, CFG, seed=3)
    rec.write(tmp_path / "t.csv", tmp_path / "t.json", n1=1)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,j,x1,z1"
    import json

    side = json.loads((tmp_path / "t.json").read_text())
    assert side["fingerprint"] == rec.fingerprint() and side["n_jumps"] == rec.n_jumps


def test_bad_epsilon_and_shape(tracker):
    with pytest.raises(ConfigurationError):
        solve(tracker.system, [0.0, 0.0], 0.0, CFG)
    with pytest.raises(ConfigurationError):
        solve(tracker.system, [0.0], 0.1, CFG)
