from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spshds.config import build_system
from spshds.core import (
    FiniteSupport,
    HybridArc,
    SelectionBundle,
    SetPredicate,
    SetValuedMap,
    UniformBox,
    build_reduced_system,
    distance_to_quasi_steady_state,
    set_membership,
    validate_basic_conditions,
)
from spshds.errors import AssumptionViolation, ConfigurationError
from spshds.streams import ForcedStream

from conftest import scalar_system

coord = st.floats(-10, 10, allow_nan=False)


def const_map(values, dim=1):
    vals = np.asarray(values, dtype=float).reshape(-1, dim)
    return SetValuedMap(lambda X: np.broadcast_to(vals, (X.shape[0],) + vals.shape).copy(), dim)


def test_qss_distance_examples():
    M = SetValuedMap(lambda X: X[:, None, :], 1)
    assert distance_to_quasi_steady_state([1.0], [3.0], M) == 2.0
    assert distance_to_quasi_steady_state([0.0], [0.0], const_map([0.0])) == 0.0
    assert distance_to_quasi_steady_state([1.0], [0.0], const_map([0.5, 2.0])) == 0.5


def test_qss_distance_empty_map_raises():
    empty = SetValuedMap(lambda X: np.full((X.shape[0], 1, 1), np.nan), 1)
    with pytest.raises(AssumptionViolation, match="quasi-steady-state map empty at x"):
        distance_to_quasi_steady_state([0.0], [0.0], empty)


@given(x=coord, z=coord)
def test_qss_distance_to_identity_map(x, z):
    M = SetValuedMap(lambda X: X[:, None, :], 1)
    assert distance_to_quasi_steady_state([x], [z], M) == abs(z - x)


def test_set_membership_examples(tracker):
    D = tracker.system.D
    assert not set_membership([0.5, 0.0], D, 0.0)
    assert set_membership([1.0, 0.0], D, 0.0)
    assert set_membership([0.999, 0.0], D, 1e-2)


@given(x=coord, t1=st.floats(0, 1), t2=st.floats(0, 1))
def test_set_membership_monotone_in_tolerance(tracker, x, t1, t2):
    lo, hi = sorted([t1, t2])
    if set_membership([x, 0.0], tracker.system.D, lo):
        assert set_membership([x, 0.0], tracker.system.D, hi)


def test_set_membership_rejects_negative_tol(tracker):
    with pytest.raises(ConfigurationError):
        set_membership([0, 0], tracker.system.D, -1.0)


def test_reduced_flow_of_tracker(tracker):
    red = build_reduced_system(tracker.system)
    X = np.linspace(-3, 3, 13)[:, None]
    F = red.F_tilde.batch(X)
    assert np.array_equal(F[:, 0, 0], -X[:, 0])


def test_reduced_jump_is_slow_component(tracker):
    red = build_reduced_system(tracker.system)
    X = np.array([[2.0], [-1.5]])
    G = red.G_tilde.batch(X, np.array([[0.1], [1.2]]))
    rows = [G[i][~np.isnan(G[i][:, 0])] for i in range(2)]
    assert np.allclose(rows[0], 0.2) and np.allclose(rows[1], -1.8)


def test_reduced_flow_with_two_valued_qss():
    sys = build_system({"n1": 1, "n2": 1, "flow_x": ["z1"], "flow_z": [0.0],
                        "qss": {"selections": [[1.0], [-2.0]], "convexified": False}})
    red = build_reduced_system(sys)
    b = red.F_tilde.bundle(np.array([0.3]))
    assert b.convexified
    assert sorted(b.values[:, 0].tolist()) == [-2.0, 1.0]


@given(x=st.floats(-3, 3), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_reduced_flow_vertices_lie_in_hull(x, a, b):
    sys = build_system({"n1": 1, "n2": 1, "flow_x": [{"+": ["z1", "x1"]}], "flow_z": [0.0],
                        "qss": {"selections": [[a], [b]]}})
    red = build_reduced_system(sys, n_interior=1)
    vals = red.F_tilde.bundle(np.array([x])).values[:, 0]
    lo, hi = min(a, b) + x, max(a, b) + x
    assert np.all(vals >= lo - 1e-12) and np.all(vals <= hi + 1e-12)


def test_validate_basic_conditions_tracker(tracker):
    rep = validate_basic_conditions(tracker.system, ([-3, -3], [3, 3]), 1000, seed=0, epsilon=0.1)
    assert rep.passed, rep.failures
    # analytic bound of the slow field on the box is |-x + (z - x)| <= 9 at a corner
    assert rep.bounds["flow_x"] == pytest.approx(9.0)
    assert rep.bounds["flow_z_over_eps"] == pytest.approx(60.0)
    # |G| = sqrt(2) |v x| <= sqrt(2) * 1.2 * 3 on the box corners
    assert rep.bounds["jump"] == pytest.approx(np.sqrt(2) * 3.6)


def test_validate_basic_conditions_detects_empty_flow():
    F = SetValuedMap(lambda X, Z: np.where((X[:, :1] > 0.5)[:, :, None], np.nan, 0.0 * X[:, None, :]), 1)
    base = scalar_system(0.0)
    sys = type(base)(1, 1, F, base.F_z, base.G, base.C, base.D, base.jump_input, base.M)
    rep = validate_basic_conditions(sys, ([-1, -1], [1, 1]), 200)
    assert not rep.passed
    fail = rep.failures[0]
    assert fail["check"] == "C_in_dom_F" and fail["witness"][0] > 0.5


def test_selection_bundle_contains():
    b = SelectionBundle([[1.0, 2.0], [3.0, 4.0]])
    assert b.contains([3.0, 4.0]) and not b.contains([3.0, 4.1])
    with pytest.raises(ConfigurationError):
        SelectionBundle(np.empty((0, 2)))


def test_pointwise_map_pads_with_nan():
    m = SetValuedMap.pointwise(lambda x: [[x[0]], [2 * x[0]]] if x[0] > 0 else [[x[0]]], 1)
    out = m.batch(np.array([[1.0], [-1.0]]))
    assert out.shape == (2, 2, 1) and np.isnan(out[1, 1, 0])
    assert len(m.bundle(np.array([-1.0]))) == 1


def test_finite_support_inverse_cdf():
    d = FiniteSupport(np.array([0.1, 1.2]), np.array([0.9, 0.1]))
    assert d.sample(ForcedStream([0.95]))[0] == 1.2
    assert d.sample(ForcedStream([0.5]))[0] == 0.1
    assert FiniteSupport(np.array([3.0]), np.array([1.0])).sample(ForcedStream([0.999]))[0] == 3.0
    with pytest.raises(ConfigurationError):
        FiniteSupport(np.array([1.0, 2.0]), np.array([0.5, 0.6]))


def test_uniform_box_sampling_range():
    d = UniformBox([-1.0, 0.0], [1.0, 2.0])
    v = d.sample(ForcedStream([0.25, 0.5]))
    assert np.allclose(v, [-0.5, 1.0])


def test_hybrid_arc_domain_check():
    from spshds.core import ArcSegment, HybridTime, JumpPoint

    s0 = ArcSegment(0, np.array([0.0, 0.5]), np.zeros((2, 2)))
    s1 = ArcSegment(1, np.array([0.5, 1.0]), np.ones((2, 2)))
    arc = HybridArc([s0, s1], [JumpPoint(HybridTime(0.5, 0), np.zeros(2), np.ones(2))])
    arc.check_domain()
    t, j, y = arc.nodes()
    assert t.tolist() == [0.0, 0.5, 0.5, 1.0] and j.tolist() == [0, 0, 1, 1]
    bad = HybridArc([s0, ArcSegment(1, np.array([0.6, 1.0]), np.ones((2, 2)))], arc.jump_points)
    with pytest.raises(AssertionError):
        bad.check_domain()


def test_set_predicate_helpers():
    Y = np.zeros((3, 2))
    assert SetPredicate.everything().member(Y).all()
    assert not SetPredicate.nothing().member(Y).any()
