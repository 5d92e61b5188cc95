"""Sampled Clarke generalized gradients."""

from __future__ import annotations

import numpy as np

from ..core import SelectionBundle
from ..errors import ConfigurationError, PreconditionError
from .functions import CertFunction, central_difference

DEFAULT_RADIUS = 1e-4
DEFAULT_SAMPLES = 64


def ball_offsets(n: int, radius: float, n_samples: int, seed: int) -> np.ndarray:
    """``n_samples`` points uniform in the radius ball of R^n (seeded)."""
    rng = np.random.default_rng([seed, 2718])
    d = rng.standard_normal((n_samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n_samples) ** (1.0 / n)
    return d * r[:, None]


def _as_function(f) -> CertFunction:
    if isinstance(f, CertFunction):
        return f
    if callable(f):
        return CertFunction.from_callable(lambda X: np.asarray(f(X), dtype=float), n_in=-1, smooth=False)
    raise ConfigurationError("f must be a CertFunction or a batch callable")


def estimate_clarke_gradient(f, y, radius: float = DEFAULT_RADIUS, n_samples: int = DEFAULT_SAMPLES,
                             seed: int = 0, mode: str = "sampled") -> SelectionBundle:
    """Gradient bundle whose convex hull approximates the Clarke gradient at ``y``.

    ``mode="analytic"`` returns the exact (forward-mode or user) gradient at
    ``y``. In sampled mode a function flagged smooth yields one central
    difference at ``y``; otherwise central differences are taken at
    ``n_samples`` points drawn uniformly in the ``radius`` ball around ``y``.
    """
    if not radius > 0 or n_samples < 1:
        raise ConfigurationError("radius must be positive and n_samples at least 1")
    fun = _as_function(f)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if mode == "analytic":
        if not fun.analytic:
            raise ConfigurationError("analytic mode needs an expression or a gradient function")
        g = fun.gradient(y[None])
        if not np.all(np.isfinite(g)):
            raise PreconditionError("function not evaluable near y")
        return SelectionBundle(g, False)
    if mode != "sampled":
        raise ConfigurationError(f"unknown gradient mode {mode!r}")
    if fun.smooth and fun.n_in != -1:
        pts = y[None]
        step = 1e-6
    else:
        pts = y[None] + ball_offsets(y.size, radius, n_samples, seed)
        step = min(1e-6, 1e-3 * radius)
    with np.errstate(all="ignore"):
        vals = fun(np.concatenate([pts, y[None]]))
        g = central_difference(fun, pts, step)
    if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(g)):
        raise PreconditionError("function not evaluable near y")
    return SelectionBundle(g, g.shape[0] > 1)


def subgradient_samples(f: CertFunction, X: np.ndarray, radius: float = DEFAULT_RADIUS,
                        n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
    """Batched gradient bundles, shape (N, K, n).

    Smooth functions contribute their gradient at each point. Nonsmooth ones
    add gradients at the same seeded offsets around every point, so results
    do not depend on how the points are batched.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    g0 = f.gradient(X)[:, None, :]
    if f.smooth:
        return g0
    offs = ball_offsets(X.shape[1], radius, n_samples, seed)
    P = (X[:, None, :] + offs[None]).reshape(-1, X.shape[1])
    g = f.gradient(P).reshape(X.shape[0], n_samples, X.shape[1])
    return np.concatenate([g0, g], axis=1)
