"""Certificate bundles, the composite Foster function and the threshold formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import expr
from ..core import SystemDefinition
from ..errors import ConfigurationError, PreconditionError
from ..regions import Region, parse_region
from .functions import CertFunction, ComparisonFunction

CONSTANTS = ("k_x", "k_z", "k_1", "k_2", "k_3", "k_4", "k_5", "c_x", "c_z", "mu_F", "mu_J")
_NONNEGATIVE = {"k_2", "mu_F", "mu_J"}

# (name, argument kind, default class)
COMPARISONS = (
    ("alpha1", "scalar", "Kinf"),
    ("alpha2", "scalar", "Kinf"),
    ("alpha3", "scalar", "Kinf"),
    ("alpha4", "scalar", "Kinf"),
    ("phi_x", "x", "PD_wrt_set"),
    ("phi_z", "scalar", "PD"),
    ("rho_x", "x", "continuous"),
    ("rho_z", "scalar", "PsD"),
    ("rho_4", "x", "continuous"),
    ("rho_5", "scalar", "PsD"),
    ("rho_hat", "y", "PD_wrt_set"),
)

CERT_KEYS = {"V", "W", "constants", "A", "O", "o_tilde_radius"} | {c[0] for c in COMPARISONS}


@dataclass(frozen=True, eq=False)
class CertificateBundle:
    n1: int
    n2: int
    V: CertFunction | None = None
    W: CertFunction | None = None
    comparisons: dict[str, ComparisonFunction] = field(default_factory=dict)
    constants: dict[str, float] = field(default_factory=dict)
    A: Region | None = None
    O: Region | None = None
    o_tilde_radius: float | None = None
    spec: Any = None

    def __getattr__(self, name):
        comps = object.__getattribute__(self, "comparisons")
        if name in comps:
            return comps[name]
        consts = object.__getattribute__(self, "constants")
        if name in consts:
            return consts[name]
        if name in {c[0] for c in COMPARISONS} or name in CONSTANTS:
            return None
        raise AttributeError(name)

    def present(self) -> set[str]:
        names = set(self.comparisons) | set(self.constants)
        for key in ("V", "W", "A", "O", "o_tilde_radius"):
            if getattr(self, key) is not None:
                names.add(key)
        return names

    def k(self, name: str) -> float:
        if name not in self.constants:
            raise PreconditionError(f"certificate constant {name} is missing")
        return self.constants[name]

    @property
    def thresholds(self) -> tuple[float, float]:
        return compute_thresholds(self.k("k_x"), self.k("k_z"), self.k("k_1"), self.k("k_2"), self.k("k_3"))

    def with_constants(self, **changes) -> "CertificateBundle":
        consts = dict(self.constants)
        consts.update(changes)
        _validate_constants(consts)
        return CertificateBundle(self.n1, self.n2, self.V, self.W, dict(self.comparisons), consts,
                                 self.A, self.O, self.o_tilde_radius, self.spec)

    def with_comparison(self, name: str, func: ComparisonFunction) -> "CertificateBundle":
        comps = dict(self.comparisons)
        comps[name] = func
        return CertificateBundle(self.n1, self.n2, self.V, self.W, comps, dict(self.constants),
                                 self.A, self.O, self.o_tilde_radius, self.spec)


def _validate_constants(consts: dict) -> None:
    for name, val in consts.items():
        if name not in CONSTANTS:
            raise ConfigurationError(f"unknown certificate constant {name!r}")
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
            raise ConfigurationError(f"constant {name} must be a finite number")
        if name in _NONNEGATIVE:
            if val < 0:
                raise ConfigurationError(f"constant {name} must be nonnegative")
        elif val <= 0:
            raise ConfigurationError(f"constant {name} must be positive")


def parse_certificate(spec: dict, sys: SystemDefinition) -> tuple[CertificateBundle, list[str]]:
    """Build a bundle from its JSON section; also returns the names left undefined."""
    if not isinstance(spec, dict):
        raise ConfigurationError("certificate section must be an object")
    unknown = set(spec) - CERT_KEYS
    if unknown:
        raise ConfigurationError(f"unknown certificate keys: {sorted(unknown)}")
    n1, n2 = sys.n1, sys.n2
    xvars = expr.variables("x", n1)
    yvars = xvars + expr.variables("z", n2)
    V = CertFunction.from_expr(spec["V"], xvars) if "V" in spec else None
    W = CertFunction.from_expr(spec["W"], yvars) if "W" in spec else None
    comps = {}
    for name, arg, default in COMPARISONS:
        if name not in spec:
            continue
        item = spec[name]
        if isinstance(item, dict) and "expr" in item:
            body, cls = item["expr"], item.get("class", default)
        else:
            body, cls = item, default
        variables = {"scalar": ["s"], "x": xvars, "y": yvars}[arg]
        comps[name] = ComparisonFunction(CertFunction.from_expr(body, variables), cls, arg, item)
    consts = dict(spec.get("constants", {}))
    _validate_constants(consts)
    A = parse_region(spec["A"], n1) if "A" in spec else None
    O = parse_region(spec["O"], n1) if "O" in spec else None
    r = spec.get("o_tilde_radius")
    if r is not None and not float(r) > 0:
        raise ConfigurationError("o_tilde_radius must be positive")
    bundle = CertificateBundle(n1, n2, V, W, comps, consts, A, O, None if r is None else float(r), spec)
    missing = sorted((CERT_KEYS - {"constants"} | set(CONSTANTS)) - bundle.present())
    return bundle, missing


def compute_thresholds(k_x: float, k_z: float, k_1: float, k_2: float, k_3: float) -> tuple[float, float]:
    """Time-scale threshold and blending weight of the composite function."""
    for name, val in (("k_x", k_x), ("k_z", k_z), ("k_1", k_1), ("k_3", k_3)):
        if not val > 0:
            raise PreconditionError(f"{name} must be positive, got {val!r}")
    if not k_2 >= 0:
        raise PreconditionError(f"k_2 must be nonnegative, got {k_2!r}")
    eps_star = (k_x * k_z) / (k_2 * k_z + k_1 * k_3)
    theta_star = k_3 / (k_1 + k_3)
    return eps_star, theta_star


def quadratic_form_threshold(k_x: float, k_z: float, k_1: float, k_2: float, k_3: float) -> float:
    """Largest epsilon for which the 2x2 composite form is positive definite at theta*."""
    compute_thresholds(k_x, k_z, k_1, k_2, k_3)
    return (k_x * k_z) / (k_x * k_2 + k_1 * k_3)


def composite_flow_margin(k_x: float, k_z: float, k_1: float, k_2: float, k_3: float,
                          theta: float, eps: float) -> tuple[float, bool]:
    """Smallest eigenvalue of the composite decrease form and its definiteness flag."""
    if not 0.0 < theta < 1.0 or not eps > 0:
        raise PreconditionError("theta must lie in (0, 1) and epsilon must be positive")
    a = (1.0 - theta) * k_x
    c = theta * (k_z / eps - k_2)
    b = -0.5 * ((1.0 - theta) * k_3 + theta * k_1)
    lam = 0.5 * (a + c) - math.hypot(0.5 * (a - c), b)
    pd = a > 0 and a * c - b * b > 0
    return lam, bool(pd)


@dataclass(frozen=True, eq=False)
class CompositeFunction:
    """E_theta(y) = (1 - theta) V(x) + theta W(x, z)."""

    V: CertFunction
    W: CertFunction
    theta: float
    n1: int

    def __call__(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return (1.0 - self.theta) * self.V(Y[:, : self.n1]) + self.theta * self.W(Y)

    def gradient(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        g = self.theta * self.W.gradient(Y)
        g[:, : self.n1] += (1.0 - self.theta) * self.V.gradient(Y[:, : self.n1])
        return g

    @property
    def smooth(self) -> bool:
        return self.V.smooth and self.W.smooth


def compose_foster(cert: CertificateBundle, theta: float) -> CompositeFunction:
    if cert.V is None or cert.W is None:
        raise PreconditionError("composite function needs both V and W")
    if not 0.0 <= theta <= 1.0:
        raise PreconditionError("theta must lie in [0, 1]")
    return CompositeFunction(cert.V, cert.W, float(theta), cert.n1)
