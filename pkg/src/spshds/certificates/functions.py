"""Certificate functions (V, W, rho-hat) and comparison functions with class checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .. import expr
from ..errors import ConfigurationError

SCALAR_CLASSES = {"Kinf", "Ginf", "PD", "PsD", "continuous"}
STATE_CLASSES = {"PD_wrt_set", "PsD_wrt_set", "PD", "PsD", "continuous"}

# probe grid for scalar comparison functions; the far point tests unboundedness
_S_GRID = np.concatenate([[0.0], np.logspace(-6, 3, 400)])
_S_FAR = np.array([1e2, 1e6])


@dataclass(frozen=True, eq=False)
class CertFunction:
    """Vectorized scalar function of a state block, shape (N, n_in) -> (N,)."""

    fn: Callable[[np.ndarray], np.ndarray]
    n_in: int
    node: tuple | None = None
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    smooth: bool = True
    spec: Any = None

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    @property
    def analytic(self) -> bool:
        return self.node is not None or self.grad_fn is not None

    def gradient(self, X) -> np.ndarray:
        """One gradient per row: forward mode, a user gradient, or central differences."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.node is not None:
            return expr.evaluate_with_grad(self.node, X)[1]
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(X), dtype=float).reshape(X.shape)
        return central_difference(self, X)

    @classmethod
    def from_expr(cls, spec, variables: list[str]) -> "CertFunction":
        node = expr.parse(spec, variables)
        return cls(lambda X: expr.evaluate(node, X), len(variables), node, None, expr.is_smooth(node), spec)

    @classmethod
    def from_callable(cls, fn, n_in: int, grad_fn=None, smooth: bool = True) -> "CertFunction":
        return cls(fn, n_in, None, grad_fn, smooth, None)


def central_difference(f: Callable[[np.ndarray], np.ndarray], X: np.ndarray, step: float = 1e-6) -> np.ndarray:
    N, n = X.shape
    g = np.empty((N, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        g[:, i] = (np.asarray(f(X + e)) - np.asarray(f(X - e))) / (2 * step)
    return g


@dataclass(frozen=True, eq=False)
class ComparisonFunction:
    """A comparison function of a scalar ``s >= 0`` or of a state block.

    ``argument`` is ``"scalar"`` for alpha/phi_z/rho_z/rho_5 and ``"x"`` /
    ``"y"`` for functions of the slow or full state.
    """

    fn: CertFunction
    declared_class: str
    argument: str = "scalar"
    spec: Any = None

    def __post_init__(self):
        allowed = SCALAR_CLASSES if self.argument == "scalar" else STATE_CLASSES
        if self.declared_class not in allowed:
            raise ConfigurationError(
                f"class {self.declared_class!r} is not valid for a {self.argument} function; use one of {sorted(allowed)}"
            )

    def __call__(self, arg) -> np.ndarray:
        if self.argument == "scalar":
            s = np.asarray(arg, dtype=float).reshape(-1)
            return self.fn(s[:, None])
        return self.fn(arg)

    def satisfies(self, required: str, zero_set: np.ndarray | None = None,
                  probe: np.ndarray | None = None, off_set: np.ndarray | None = None) -> tuple[bool, str]:
        """Declared class implies ``required`` and sampled values agree with the declaration."""
        if not _implies(self.declared_class, required):
            return False, f"declared {self.declared_class}, required {required}"
        if self.argument == "scalar":
            return check_scalar_class(self, required)
        return check_state_class(self, required, zero_set, probe, off_set)


_IMPLIES = {
    "Kinf": {"Kinf", "Ginf", "PD", "PsD", "continuous"},
    "Ginf": {"Ginf", "continuous"},
    "PD": {"PD", "PsD", "PD_wrt_set", "PsD_wrt_set", "continuous"},
    "PD_wrt_set": {"PD", "PsD", "PD_wrt_set", "PsD_wrt_set", "continuous"},
    "PsD": {"PsD", "PsD_wrt_set", "continuous"},
    "PsD_wrt_set": {"PsD", "PsD_wrt_set", "continuous"},
    "continuous": {"continuous"},
}


def _implies(declared: str, required: str) -> bool:
    return required in _IMPLIES.get(declared, set())


def check_scalar_class(f: ComparisonFunction, cls: str) -> tuple[bool, str]:
    vals = f(_S_GRID)
    far = f(_S_FAR)
    if not np.all(np.isfinite(vals)):
        return False, "non-finite value on the probe grid"
    if cls == "continuous":
        return True, "finite on probe grid"
    if np.any(vals < 0):
        return False, f"negative value at s={_S_GRID[np.argmax(vals < 0)]:.3g}"
    unbounded = far[1] > 2.0 * far[0] and far[1] > vals[-1]
    d = np.diff(vals)
    if cls == "Kinf":
        if abs(vals[0]) > 1e-12:
            return False, f"value {vals[0]:.3g} at zero"
        if np.any(d <= 0):
            return False, f"not strictly increasing near s={_S_GRID[1:][np.argmax(d <= 0)]:.3g}"
        return (True, "sampled K-infinity") if unbounded else (False, "appears bounded")
    if cls == "Ginf":
        if np.any(d < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
            return False, f"decreasing near s={_S_GRID[1:][np.argmax(d < 0)]:.3g}"
        return (True, "sampled G-infinity") if unbounded else (False, "appears bounded")
    if cls == "PD":
        if abs(vals[0]) > 1e-12:
            return False, f"value {vals[0]:.3g} at zero"
        if np.any(vals[1:] <= 0):
            return False, f"vanishes at s={_S_GRID[1:][np.argmax(vals[1:] <= 0)]:.3g}"
        return True, "sampled positive definite"
    if cls == "PsD":
        if abs(vals[0]) > 1e-12:
            return False, f"value {vals[0]:.3g} at zero"
        return True, "sampled positive semidefinite"
    raise ConfigurationError(f"unknown scalar class {cls!r}")


def check_state_class(f: ComparisonFunction, cls: str, zero_set, probe, off_set) -> tuple[bool, str]:
    """Sampled check relative to a set given by points inside it and probes off it."""
    if cls == "continuous":
        vals = f(probe) if probe is not None else np.zeros(1)
        return (bool(np.all(np.isfinite(vals))), "finite on probes")
    if zero_set is None or probe is None:
        return False, "no sample of the reference set"
    on = f(zero_set)
    if np.any(np.abs(on) > 1e-12):
        return False, f"nonzero ({float(np.max(np.abs(on))):.3g}) on the reference set"
    vals = f(probe)
    if np.any(vals < -1e-12):
        return False, "negative value on probes"
    if cls in ("PD", "PD_wrt_set"):
        pts = off_set if off_set is not None else probe
        off_vals = f(pts)
        if pts.shape[0] and np.any(off_vals <= 0):
            k = int(np.argmax(off_vals <= 0))
            return False, f"vanishes off the reference set at {np.round(pts[k], 6).tolist()}"
        return True, "sampled positive definite w.r.t. the set"
    return True, "sampled positive semidefinite w.r.t. the set"
