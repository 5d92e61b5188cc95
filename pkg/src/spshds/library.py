"""Built-in example systems with hand-derived certificates.

Every example is defined by a JSON-ready config dict, so the objects built
here and the files emitted by ``spshds examples`` are the same system.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .config import LoadedConfig, load_config
from .errors import ConfigurationError

HALF_SQ = {"*": [0.5, {"^": ["s", 2]}]}
V_QUAD = {"*": [0.5, {"^": ["x1", 2]}]}
W_QUAD = {"*": [0.5, {"^": [{"-": ["z1", "x1"]}, 2]}]}
TRACK_X = {"+": [{"-": ["x1"]}, {"-": ["z1", "x1"]}]}      # -x + (z - x)
TRACK_Z = {"-": ["x1", "z1"]}                               # -(z - x)
UNIT_K = {"k_x": 1.0, "k_z": 1.0, "k_1": 1.0, "k_2": 1.0, "k_3": 1.0}
PROBE = {"low": [-3.0, -3.0], "high": [3.0, 3.0]}

LINEAR_TRACKER_DOC = """\
Slow state x tracks the fast state z, which relaxes onto x.

Flows on all of R^2: x' = -x + (z - x), eps z' = -(z - x). Jumps on |x| >= 1:
(x, z)+ = (v x, v x) with v = 0.1 w.p. 0.9 and v = 1.2 w.p. 0.1.
The boundary layer has the unique equilibrium z = x, so M(x) = {x}.

With V = x^2/2 and W = (z - x)^2/2:
  <dW/dz, f_z> = -(z - x)^2, so k_z = 1 with phi_z(s) = s.
  the reduced flow is x' = -x, so <V', f~> = -x^2 and k_x = 1 with phi_x = |x|.
  <dW/dx, f_x> = x (z - x) - (z - x)^2 <= |x||z - x| + (z - x)^2, so k_1 = k_2 = 1.
  <V', f_x - f~> = x (z - x) <= |x||z - x|, so k_3 = 1.
Hence eps* = 1/(1 + 1) = 0.5 and theta* = 0.5.
For the composite E = x^2/4 + (z - x)^2/4 a jump gives E+ = v^2 x^2 / 4 and
E[v^2] = 0.9 * 0.01 + 0.1 * 1.44 = 0.153, so
E[E+] - E + rho_hat = (0.03825 - 0.125) x^2 - 0.125 (z - x)^2 < 0 on the jump set
with rho_hat = x^2/8 + (z - x)^2/8.
"""

WEAK_DECREASE_DOC = """\
Linear-tracker flows with the slow flow slowed to a stop near the origin.

Slow flow: x' = sigma(x) (-x + (z - x)) with sigma(x) = max(|x| - 0.1, 0) / max(|x|, 0.1),
so sigma vanishes on |x| <= 0.1 and sigma(x) |x| = max(|x| - 0.1, 0) elsewhere.
Fast flow, jump map and input law as in linear-tracker; jumps happen on |x| <= 0.2.

Certificate (V, W as in linear-tracker, unit constants):
  reduced flow term: -sigma x^2 + (|x| - 0.1)_+^2 = -0.1 (|x| - 0.1)_+ <= 0 with
  phi_x(x) = max(|x| - 0.1, 0), which is only positive semidefinite w.r.t. {0}.
  interconnection terms: sigma |x| |z - x| = (|x| - 0.1)_+ |z - x| = phi_z phi_x.
Jump conditions (first option):
  E[V(v x)] - V(x) + c_x x^2 = (0.0765 - 0.5 + 0.4) x^2 <= 0 with c_x = 0.4, mu_J = 0;
  W after a jump is 0, so E[W+] - W <= k_4 x^2 with k_4 = 0.1;
  rho_x = rho_4 = x^2 and k_3 k_4 / k_1 = 0.1 < 0.4.
No solution stays on a level set of E = x^2/4 + (z - x)^2/4 with c > 0: off the
jump set either z != x, where the fast flow strictly lowers W and the slow part
does not raise E, or z = x with |x| > 0.2, where x' = -sigma x strictly lowers V;
on the jump set every jump multiplies x by v != 1, changing E.
"""

NOISY_RESET_DOC = """\
Linear-tracker flows with additive noisy resets near the origin.

Jumps on |x| <= 0.5: (x, z)+ = (x + v, x + v) with v = -2 or +2, equally likely.
m(x) = x, O = (-1, 1) and A = [-1, 1].

Certificate: V = x^2/2, W = (z - x)^2/2, unit flow constants, mu_F = 1.
  alpha3(s) = s^2/2 and alpha4(s) = (s + 1)^2/2 sandwich V because
  |x|_A <= |x| <= |x|_A + 1 on R (triangle inequality for the distance to [-1, 1]).
  alpha4 is G-infinity, not K-infinity (alpha4(0) = 1/2).
Jump conditions: E[V(x + v)] - V(x) = 2 and c_x rho_x(x) = x^2 <= 0.25 on the jump set,
  so mu_J = 2.25 balances the bound on O; W+ = 0 gives k_4 = 0.5 with rho_4 = x^2.
Composite decrease across jumps: E[E+] - E = 1 - (z - x)^2/4 on the jump set.
  With rho_hat = 1/4 the margin is 1.25 - (z - x)^2/4 - mu_J 1{inflated O}; the inflated
  target must have radius at least sqrt(5) in z - m(x), hence o_tilde_radius = 3.
"""


def _base_system(name: str, flow_x, jump_set, jump, dist) -> dict:
    return {
        "name": name,
        "n1": 1,
        "n2": 1,
        "flow_x": [flow_x],
        "flow_z": [TRACK_Z],
        "flow_set": "all",
        "jump_set": jump_set,
        "jump": [jump],
        "jump_input": dist,
        "qss": ["x1"],
        "probe_box": copy.deepcopy(PROBE),
    }


TWO_ATOMS = {"finite": {"values": [[0.1], [1.2]], "probs": [0.9, 0.1]}}
SCALED_RESET = [{"*": ["v1", "x1"]}, {"*": ["v1", "x1"]}]


def _linear_tracker() -> dict:
    return {
        "system": _base_system("linear-tracker", TRACK_X, {"le": {"-": [1.0, {"abs": "x1"}]}},
                               SCALED_RESET, TWO_ATOMS),
        "certificate": {
            "V": V_QUAD,
            "W": W_QUAD,
            "alpha1": HALF_SQ, "alpha2": HALF_SQ, "alpha3": HALF_SQ, "alpha4": HALF_SQ,
            "phi_x": {"expr": {"abs": "x1"}, "class": "PD_wrt_set"},
            "phi_z": {"expr": "s", "class": "PD"},
            "rho_hat": {"expr": {"+": [{"*": [0.125, {"^": ["x1", 2]}]},
                                       {"*": [0.125, {"^": [{"-": ["z1", "x1"]}, 2]}]}]},
                        "class": "PD_wrt_set"},
            "constants": dict(UNIT_K, mu_F=0.0),
            "A": {"point": [0.0]},
        },
        "execution": {"flow": {"h_base": 0.01}, "T_total": 20.0, "overlap_policy": "prefer_jump"},
        "verification": {"grid": {"low": -3.0, "high": 3.0, "n": 101}, "tol": 1e-9, "n_mc": 10000, "seed": 0},
    }


def _weak_decrease() -> dict:
    sigma = {"/": [{"max": [{"-": [{"abs": "x1"}, 0.1]}, 0.0]}, {"max": [{"abs": "x1"}, 0.1]}]}
    return {
        "system": _base_system("weak-decrease", {"*": [sigma, TRACK_X]},
                               {"le": {"-": [{"abs": "x1"}, 0.2]}}, SCALED_RESET, TWO_ATOMS),
        "certificate": {
            "V": V_QUAD,
            "W": W_QUAD,
            "alpha1": HALF_SQ, "alpha2": HALF_SQ, "alpha3": HALF_SQ, "alpha4": HALF_SQ,
            "phi_x": {"expr": {"max": [{"-": [{"abs": "x1"}, 0.1]}, 0.0]}, "class": "PsD_wrt_set"},
            "phi_z": {"expr": "s", "class": "PsD"},
            "rho_x": {"expr": {"^": ["x1", 2]}, "class": "continuous"},
            "rho_4": {"expr": {"^": ["x1", 2]}, "class": "continuous"},
            "constants": dict(UNIT_K, c_x=0.4, k_4=0.1, mu_F=0.0, mu_J=0.0),
            "A": {"point": [0.0]},
        },
        "execution": {"flow": {"h_base": 0.01}, "T_total": 20.0, "overlap_policy": "prefer_jump"},
        "verification": {"grid": {"low": -3.0, "high": 3.0, "n": 101}, "tol": 1e-9, "n_mc": 10000, "seed": 0,
                         "level_set": {"c_grid": [0.05, 0.25, 1.0], "n_per_level": 8, "duration": 5.0}},
    }


def _noisy_reset() -> dict:
    return {
        "system": _base_system("noisy-reset", TRACK_X, {"le": {"-": [{"abs": "x1"}, 0.5]}},
                               [{"+": ["x1", "v1"]}, {"+": ["x1", "v1"]}],
                               {"finite": {"values": [[-2.0], [2.0]], "probs": [0.5, 0.5]}}),
        "certificate": {
            "V": V_QUAD,
            "W": W_QUAD,
            "alpha1": HALF_SQ, "alpha2": HALF_SQ, "alpha3": HALF_SQ,
            "alpha4": {"expr": {"*": [0.5, {"^": [{"+": ["s", 1.0]}, 2]}]}, "class": "Ginf"},
            "phi_x": {"expr": {"abs": "x1"}, "class": "PD_wrt_set"},
            "phi_z": {"expr": "s", "class": "PD"},
            "rho_x": {"expr": {"^": ["x1", 2]}, "class": "continuous"},
            "rho_4": {"expr": {"^": ["x1", 2]}, "class": "continuous"},
            "rho_z": {"expr": {"^": ["s", 2]}, "class": "PsD"},
            "rho_hat": {"expr": 0.25, "class": "continuous"},
            "constants": dict(UNIT_K, mu_F=1.0, mu_J=2.25, c_x=1.0, k_4=0.5, c_z=0.5),
            "A": {"box": {"low": [-1.0], "high": [1.0]}},
            "O": {"box": {"low": [-1.0], "high": [1.0]}},
            "o_tilde_radius": 3.0,
        },
        "execution": {"flow": {"h_base": 0.02}, "T_total": 10.0, "overlap_policy": "prefer_jump"},
        "verification": {"grid": {"low": -3.0, "high": 3.0, "n": 101}, "tol": 1e-9, "n_mc": 10000, "seed": 0,
                         "level_set": {"c_grid": [1.0, 2.0, 4.0], "n_per_level": 8, "duration": 5.0}},
    }


_BUILDERS = {
    "linear-tracker": (_linear_tracker, LINEAR_TRACKER_DOC,
                       [{"theorem": "T1", "epsilon": 0.1, "verdict": "pass"},
                        {"theorem": "T1", "epsilon": 0.6, "verdict": "fail"}]),
    "weak-decrease": (_weak_decrease, WEAK_DECREASE_DOC,
                      [{"theorem": "T2", "epsilon": 0.1, "verdict": "pass"}]),
    "noisy-reset": (_noisy_reset, NOISY_RESET_DOC,
                    [{"theorem": "T3", "epsilon": 0.05, "verdict": "pass"},
                     {"theorem": "T4", "epsilon": 0.05, "verdict": "pass"}]),
}

EXAMPLE_NAMES = tuple(_BUILDERS)


@dataclass(frozen=True, eq=False)
class NamedExample:
    name: str
    loaded: LoadedConfig
    expected: list
    doc: str

    @property
    def system(self):
        return self.loaded.system

    @property
    def certificate(self):
        return self.loaded.certificate

    @property
    def thresholds(self) -> tuple[float, float]:
        return self.certificate.thresholds

    @property
    def config(self) -> dict:
        return copy.deepcopy(self.loaded.raw)


def example_config(name: str) -> dict:
    if name not in _BUILDERS:
        raise ConfigurationError(f"unknown example {name!r}; choose one of {list(EXAMPLE_NAMES)}")
    return _BUILDERS[name][0]()


def make_example(name: str) -> NamedExample:
    cfg = example_config(name)
    _, doc, expected = _BUILDERS[name]
    return NamedExample(name, load_config(cfg), copy.deepcopy(expected), doc)
