from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spshds import expr, kernels
from spshds.errors import ConfigurationError

VARS = ["x1", "z1"]
finite = st.floats(-5, 5, allow_nan=False)

CASES = [
    ({"+": ["x1", {"*": [2.0, "z1"]}]}, lambda x, z: x + 2 * z),
    ({"-": ["x1", "z1"]}, lambda x, z: x - z),
    ({"-": ["x1"]}, lambda x, z: -x),
    ({"/": ["x1", {"+": [1.0, {"^": ["z1", 2]}]}]}, lambda x, z: x / (1 + z * z)),
    ({"^": ["x1", 3]}, lambda x, z: x ** 3),
    ({"abs": "x1"}, lambda x, z: abs(x)),
    ({"max": ["x1", "z1", 0.5]}, lambda x, z: max(x, z, 0.5)),
    ({"min": ["x1", "z1"]}, lambda x, z: min(x, z)),
    ({"sqrt": {"+": [1.0, {"^": ["x1", 2]}]}}, lambda x, z: np.sqrt(1 + x * x)),
    ({"norm": ["x1", "z1"]}, lambda x, z: np.hypot(x, z)),
    ({"poly": {"coeffs": [1.0, -3.0], "powers": [[2, 0], [1, 1]]}}, lambda x, z: x * x - 3 * x * z),
]


@pytest.mark.parametrize("spec,ref", CASES)
@given(x=finite, z=finite)
def test_evaluate_matches_python_oracle(spec, ref, x, z):
    node = expr.parse(spec, VARS)
    got = expr.evaluate(node, np.array([[x, z]]))[0]
    assert got == pytest.approx(ref(x, z), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("spec,ref", CASES)
@given(x=finite, z=finite)
def test_bytecode_equals_tree_evaluator(spec, ref, x, z):
    node = expr.parse(spec, VARS)
    b = expr.ProgramBuilder()
    s, e = b.add(node)
    code, args = b.arrays()
    y = np.array([x, z])
    stack = np.empty(b.max_depth + 1)
    assert kernels.run_program(code, args, s, e, y, stack) == expr.evaluate(node, y[None])[0]


@pytest.mark.parametrize("spec,ref", [c for c in CASES if expr.is_smooth(expr.parse(c[0], VARS))])
@given(x=st.floats(-3, 3), z=st.floats(-3, 3))
def test_forward_gradient_matches_central_difference(spec, ref, x, z):
    node = expr.parse(spec, VARS)
    _, g = expr.evaluate_with_grad(node, np.array([[x, z]]))
    h = 1e-6
    fd = [(ref(x + h, z) - ref(x - h, z)) / (2 * h), (ref(x, z + h) - ref(x, z - h)) / (2 * h)]
    assert np.allclose(g[0], fd, atol=1e-5, rtol=1e-5)


def test_smoothness_flags():
    assert expr.is_smooth(expr.parse({"*": ["x1", "z1"]}, VARS))
    assert not expr.is_smooth(expr.parse({"abs": "x1"}, VARS))
    assert not expr.is_smooth(expr.parse({"max": ["x1", 0.0]}, VARS))


@pytest.mark.parametrize("bad", [
    {"^": ["x1", 0.5]}, {"foo": [1]}, "y9", True, {"-": [1, 2, 3]}, {"+": []}, {"/": ["x1"]},
    {"poly": {"coeffs": [1.0], "powers": [[1]]}},
])
def test_malformed_expressions_rejected(bad):
    with pytest.raises(ConfigurationError):
        expr.parse(bad, VARS)
