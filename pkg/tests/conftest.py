from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from spshds.config import build_system, load_config
from spshds.library import make_example

settings.register_profile("spshds", max_examples=60, deadline=None)
settings.load_profile("spshds")


@pytest.fixture(scope="session")
def tracker():
    return make_example("linear-tracker")


@pytest.fixture(scope="session")
def weak():
    return make_example("weak-decrease")


@pytest.fixture(scope="session")
def noisy():
    return make_example("noisy-reset")


def scalar_system(flow_x, jump_set="empty", flow_set="all", jump=None, dist=None, flow_z=0.0, qss=None):
    """Small (1+1)-dimensional system built from the config vocabulary."""
    cfg = {"n1": 1, "n2": 1, "flow_x": [flow_x], "flow_z": [flow_z], "flow_set": flow_set,
           "jump_set": jump_set, "qss": [qss if qss is not None else "x1"]}
    if jump is not None:
        cfg["jump"] = [jump]
    if dist is not None:
        cfg["jump_input"] = dist
    return build_system(cfg)


def rk4_reference(f, y0, t_end, h):
    """Plain RK4 oracle written independently of the package integrator."""
    y = np.array(y0, dtype=float)
    n = int(round(t_end / h))
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def tracker_field(eps):
    def f(y):
        x, z = y
        return np.array([-x + (z - x), -(z - x) / eps])
    return f
