from __future__ import annotations

import numpy as np
import pytest

from spshds.config import build_system, load_config, parse_set
from spshds.errors import ConfigurationError
from spshds.regions import parse_region

BASE = {"n1": 1, "n2": 1, "flow_x": [0.0], "flow_z": [0.0], "qss": ["x1"]}


@pytest.mark.parametrize("spec,inside,outside", [
    ({"halfspace": {"a": [1.0, 0.0], "b": 1.0}}, [0.5, 9.0], [1.5, 0.0]),
    ({"ball": {"center": [1.0], "radius": 0.5, "coords": ["x1"]}}, [1.2, 5.0], [2.0, 0.0]),
    ({"outside_ball": {"center": [0.0, 0.0], "radius": 1.0}}, [2.0, 0.0], [0.1, 0.1]),
    ({"box": {"low": [None, -1.0], "high": [0.0, 1.0]}}, [-5.0, 0.0], [0.5, 0.0]),
    ({"and": [{"box": {"low": [0.0], "coords": ["x1"]}}, {"box": {"high": [1.0], "coords": ["z1"]}}]},
     [1.0, 0.0], [-1.0, 0.0]),
    ({"or": [{"box": {"low": [2.0], "coords": [0]}}, {"box": {"high": [-2.0], "coords": [0]}}]},
     [3.0, 0.0], [0.0, 0.0]),
])
def test_set_vocabulary(spec, inside, outside):
    sys = build_system(dict(BASE, jump_set=spec))
    assert sys.D.member(np.array([inside]))[0]
    assert not sys.D.member(np.array([outside]))[0]


@pytest.mark.parametrize("patch", [
    {"n1": 0}, {"bogus": 1}, {"flow_x": [0.0, 1.0]}, {"jump_set": {"wedge": 1}},
    {"jump_input": {"finite": {"values": [1.0], "probs": [0.5]}}}, {"flow_x": {"affine": {"A": [[1.0]]}}},
])
def test_bad_system_sections(patch):
    with pytest.raises(ConfigurationError):
        build_system(dict(BASE, **patch))


def test_affine_map():
    sys = build_system(dict(BASE, flow_x={"affine": {"A": [[2.0, -1.0]], "b": [0.5]}}))
    out = sys.F_x.batch(np.array([[1.0]]), np.array([[3.0]]))
    assert out[0, 0, 0] == pytest.approx(2.0 - 3.0 + 0.5)


def test_load_config_sections(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config({"system": BASE, "extra": {}})
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")
    loaded = load_config({"system": BASE, "certificate": {"V": {"^": ["x1", 2]}}})
    assert "W" in loaded.certificate_errors and loaded.certificate.V is not None


def test_regions():
    r = parse_region({"box": {"low": [-1.0], "high": [1.0]}}, 1)
    assert r.distance(np.array([[3.0]]))[0] == 2.0
    assert not r.contains_open(np.array([[1.0]]))[0] and r.contains_closed(np.array([[1.0]]))[0]
    assert r.same_closure(parse_region({"box": {"low": [-1.0], "high": [1.0]}}, 1))
    p = parse_region({"point": [0.0]}, 1)
    assert p.cloud().tolist() == [[0.0]] and not p.same_closure(p)
    with pytest.raises(ConfigurationError):
        parse_region({"box": {"low": [0.0, 0.0], "high": [1.0, 1.0]}}, 1)
