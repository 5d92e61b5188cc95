"""Grid screens of the certificate inequalities.

Every check evaluates a violation (left side minus right side) at a list of
states and reports the largest one with the first state attaining it in
grid order. A pass is evidence on the sampled points, not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..core import FiniteSupport, ReducedSystem, SystemDefinition, build_reduced_system, qss_distance
from ..errors import ConfigurationError, PreconditionError
from ..streams import RandomStream
from .bundle import CertificateBundle, compose_foster
from .clarke import DEFAULT_RADIUS, DEFAULT_SAMPLES, subgradient_samples

FLOW_IDS = ("A2b", "A4b", "A6a", "A6b")
BOUND_IDS = ("A2a", "A4a")
JUMP_IDS = ("A3", "A5", "A7", "A8", "T1b", "T3b")
SLOW_IDS = ("A4a", "A4b", "A5")

MC_SUBSTREAM = 7
MC_BATCH = 256


@dataclass(frozen=True)
class GridSpec:
    low: tuple
    high: tuple
    n: tuple

    def __post_init__(self):
        lo, hi, n = np.asarray(self.low, float), np.asarray(self.high, float), np.asarray(self.n, int)
        if not (lo.shape == hi.shape == n.shape) or lo.ndim != 1:
            raise ConfigurationError("grid low, high and n must have equal lengths")
        if np.any(n < 1) or np.any(hi < lo):
            raise ConfigurationError("grid needs at least one point per axis and ordered bounds")
        object.__setattr__(self, "low", tuple(float(v) for v in lo))
        object.__setattr__(self, "high", tuple(float(v) for v in hi))
        object.__setattr__(self, "n", tuple(int(v) for v in n))

    @classmethod
    def box(cls, low: float, high: float, n: int, dim: int) -> "GridSpec":
        return cls((low,) * dim, (high,) * dim, (n,) * dim)

    def axes(self, dims: int | None = None) -> list[np.ndarray]:
        k = len(self.n) if dims is None else dims
        return [np.linspace(a, b, m) if m > 1 else np.array([a]) for a, b, m in
                zip(self.low[:k], self.high[:k], self.n[:k])]

    def points(self, dims: int | None = None) -> np.ndarray:
        """Grid points in lexicographic order (first coordinate slowest)."""
        axes = self.axes(dims)
        return np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T

    def to_dict(self) -> dict:
        return {"low": list(self.low), "high": list(self.high), "n": list(self.n)}


@dataclass
class ViolationReport:
    assumption: str
    grid: dict | None
    max_violation: float
    witness: list | None
    n_points: int
    tol: float
    passed: bool
    mc_std: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "grid": self.grid,
            "max_violation": self.max_violation,
            "witness": self.witness,
            "n_points": self.n_points,
            "tol": self.tol,
            "passed": self.passed,
            "mc_std": self.mc_std,
            "details": self.details,
        }


def _nanmax(a: np.ndarray, axes) -> np.ndarray:
    return np.max(np.where(np.isnan(a), -np.inf, a), axis=axes)


def _nanmin(a: np.ndarray, axes) -> np.ndarray:
    return np.min(np.where(np.isnan(a), np.inf, a), axis=axes)


def _need(cert: CertificateBundle, *names):
    missing = [n for n in names if getattr(cert, n) is None]
    if missing:
        raise PreconditionError(f"certificate is missing {', '.join(missing)}")


def _indicator_O(cert: CertificateBundle, X: np.ndarray) -> np.ndarray:
    if cert.O is None:
        return np.zeros(X.shape[0])
    return cert.O.contains_open(X).astype(float)


def _finish(aid, grid, viol, points, tol, mc_std=None, details=None) -> ViolationReport:
    if viol.size == 0:
        raise ConfigurationError(f"{aid}: no grid point lies in the domain of the inequality")
    k = int(np.argmax(viol))
    if mc_std is None:
        passed = bool(np.all(viol <= tol))
        std = 0.0
    else:
        passed = bool(np.all(viol <= tol + 3.0 * mc_std))
        std = float(mc_std[k])
    return ViolationReport(aid, grid, float(viol[k]), points[k].tolist(), int(viol.size), float(tol),
                           passed, std, details or {})


def _domain(sys: SystemDefinition, Y: np.ndarray, which: str, tol: float = 0.0) -> np.ndarray:
    if which == "C":
        return Y[sys.C.member(Y, tol)]
    if which == "D":
        return Y[sys.D.member(Y, tol)]
    if which == "CD":
        return Y[sys.C.member(Y, tol) | sys.D.member(Y, tol)]
    raise AssertionError(which)


def _grid_points(aid: str, sys: SystemDefinition, grid: GridSpec | None, points) -> tuple[np.ndarray, dict | None]:
    if points is not None:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.shape[0] == 0:
            raise ConfigurationError(f"{aid}: empty point list")
        return P, None
    if grid is None:
        raise ConfigurationError(f"{aid}: a grid or an explicit point list is required")
    dims = sys.n1 if aid in SLOW_IDS else sys.n
    if len(grid.n) < dims:
        raise ConfigurationError(f"{aid}: grid needs at least {dims} axes")
    return grid.points(dims), grid.to_dict()


def _reduced(sys, reduced: ReducedSystem | None) -> ReducedSystem:
    return reduced if reduced is not None else build_reduced_system(sys)


def _qss(sys: SystemDefinition, Y: np.ndarray) -> np.ndarray:
    d, empty = qss_distance(sys.M, Y[:, : sys.n1], Y[:, sys.n1:])
    if np.any(empty):
        raise PreconditionError("quasi-steady-state map empty at a grid point")
    return d


def flow_violation(aid: str, sys: SystemDefinition, cert: CertificateBundle, P: np.ndarray,
                   reduced: ReducedSystem | None = None, radius: float = DEFAULT_RADIUS,
                   n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
    """Pointwise violation of a flow inequality at states already in its domain."""
    n1 = sys.n1
    if aid == "A4b":
        _need(cert, "V", "phi_x", "k_x")
        X = P
        nu = subgradient_samples(cert.V, X, radius, n_samples, seed)
        F = _reduced(sys, reduced).F_tilde.batch(X)
        lhs = _nanmax(np.einsum("nad,nbd->nab", nu, F), (1, 2))
        mu_F = cert.mu_F or 0.0
        return lhs + cert.k("k_x") * cert.phi_x(X) ** 2 - mu_F * _indicator_O(cert, X)
    X, Z = P[:, :n1], P[:, n1:]
    d = _qss(sys, P)
    if aid == "A2b":
        _need(cert, "W", "phi_z", "k_z")
        nu = subgradient_samples(cert.W, P, radius, n_samples, seed)[:, :, n1:]
        F = sys.F_z.batch(X, Z)
        lhs = _nanmax(np.einsum("nad,nbd->nab", nu, F), (1, 2))
        return lhs + cert.k("k_z") * cert.phi_z(d) ** 2
    if aid == "A6a":
        _need(cert, "W", "phi_x", "phi_z", "k_1", "k_2")
        nu = subgradient_samples(cert.W, P, radius, n_samples, seed)[:, :, :n1]
        F = sys.F_x.batch(X, Z)
        lhs = _nanmax(np.einsum("nad,nbd->nab", nu, F), (1, 2))
        pz = cert.phi_z(d)
        return lhs - cert.k("k_1") * pz * cert.phi_x(X) - cert.k("k_2") * pz ** 2
    if aid == "A6b":
        _need(cert, "V", "phi_x", "phi_z", "k_3")
        nu = subgradient_samples(cert.V, X, radius, n_samples, seed)
        F = sys.F_x.batch(X, Z)
        Ft = _reduced(sys, reduced).F_tilde.batch(X)
        diff = F[:, :, None, :] - Ft[:, None, :, :]
        inner = np.einsum("nad,nbcd->nabc", nu, diff)
        worst = inner.max(axis=1)  # NaN marks an absent selection
        best = _nanmin(worst, 2)
        lhs = _nanmax(best, 1)
        return lhs - cert.k("k_3") * cert.phi_z(d) * cert.phi_x(X)
    raise ConfigurationError(f"unknown flow inequality {aid!r}")


def check_flow_inequality(aid: str, sys: SystemDefinition, cert: CertificateBundle, grid: GridSpec | None = None,
                          tol: float = 1e-9, points=None, reduced: ReducedSystem | None = None,
                          radius: float = DEFAULT_RADIUS, n_samples: int = DEFAULT_SAMPLES,
                          seed: int = 0) -> ViolationReport:
    if aid not in FLOW_IDS:
        raise ConfigurationError(f"unknown flow inequality {aid!r}")
    P, gspec = _grid_points(aid, sys, grid, points)
    red = None
    if aid in ("A4b", "A6b"):
        red = _reduced(sys, reduced)
    if points is None:
        P = P[red.C_x.member(P)] if aid == "A4b" else _domain(sys, P, "C")
    viol = flow_violation(aid, sys, cert, P, red, radius, n_samples, seed) if P.shape[0] else np.empty(0)
    return _finish(aid, gspec, viol, P, tol)


def _support_samples(dist, seed: int, n: int = 64) -> np.ndarray:
    if isinstance(dist, FiniteSupport):
        return dist.values
    s = RandomStream(seed, 0, MC_SUBSTREAM)
    V = np.array([dist.sample(s) for _ in range(n)])
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(dist.low, dist.high)], indexing="ij"))
    return np.concatenate([V, corners.reshape(dist.dim, -1).T])


def bound_violation(aid: str, sys: SystemDefinition, cert: CertificateBundle, P: np.ndarray) -> np.ndarray:
    if aid == "A2a":
        _need(cert, "W", "alpha1", "alpha2")
        d = _qss(sys, P)
        w = cert.W(P)
        return np.maximum(cert.alpha1(d) - w, w - cert.alpha2(d))
    if aid == "A4a":
        _need(cert, "V", "alpha3", "alpha4", "A")
        d = cert.A.distance(P)
        v = cert.V(P)
        return np.maximum(cert.alpha3(d) - v, v - cert.alpha4(d))
    raise ConfigurationError(f"unknown bound inequality {aid!r}")


def check_bound_inequality(aid: str, sys: SystemDefinition, cert: CertificateBundle, grid: GridSpec | None = None,
                           tol: float = 1e-9, points=None, reduced: ReducedSystem | None = None,
                           seed: int = 0) -> ViolationReport:
    """Sandwich bounds on C ∪ D plus the jump images of grid points in D."""
    if aid not in BOUND_IDS:
        raise ConfigurationError(f"unknown bound inequality {aid!r}")
    P, gspec = _grid_points(aid, sys, grid, points)
    details = {}
    if points is None:
        vs = _support_samples(sys.jump_input, seed)
        if aid == "A2a":
            base = _domain(sys, P, "CD")
            inD = _domain(sys, P, "D")
            pushed = []
            for v in vs:
                if inD.shape[0]:
                    G = sys.G.batch(inD[:, : sys.n1], inD[:, sys.n1:], np.broadcast_to(v, (inD.shape[0], v.size)))
                    G = G.reshape(-1, sys.n)
                    pushed.append(G[~np.any(np.isnan(G), axis=1)])
        else:
            red = _reduced(sys, reduced)
            cx, dx = red.C_x.member(P), red.D_x.member(P)
            base = P[cx | dx]
            inD = P[dx]
            pushed = []
            for v in vs:
                if inD.shape[0]:
                    G = red.G_tilde.batch(inD, np.broadcast_to(v, (inD.shape[0], v.size))).reshape(-1, sys.n1)
                    pushed.append(G[~np.any(np.isnan(G), axis=1)])
        extra = np.unique(np.concatenate(pushed), axis=0) if pushed else np.empty((0, P.shape[1]))
        details = {"n_grid_points": int(base.shape[0]), "n_jump_images": int(extra.shape[0])}
        P = np.concatenate([base, extra])
    viol = bound_violation(aid, sys, cert, P) if P.shape[0] else np.empty(0)
    rep = _finish(aid, gspec, viol, P, tol, details=details)
    if details:
        rep.details["witness_source"] = "grid" if int(np.argmax(viol)) < details["n_grid_points"] else "jump_image"
    return rep


def _tilde_O(sys: SystemDefinition, cert: CertificateBundle, Y: np.ndarray) -> np.ndarray:
    if cert.O is None or cert.o_tilde_radius is None:
        raise PreconditionError("the inflated recurrence set needs O and o_tilde_radius")
    d = _qss(sys, Y)
    return (cert.O.contains_open(Y[:, : sys.n1]) & (d < cert.o_tilde_radius)).astype(float)


def expected_sup(f: Callable[[np.ndarray], np.ndarray], images: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 P: np.ndarray, dist, n_mc: int = 10_000, seed: int = 0) -> tuple[np.ndarray, np.ndarray | None]:
    """E over v of max over the image bundle of ``f``; exact for finite support.

    ``images(P, Vb)`` returns (N, K, d) bundles. Returns the mean and, for
    sampled distributions, the Monte Carlo standard error per point.
    """
    N = P.shape[0]

    def sup_over(Pr, Vr):
        G = images(Pr, Vr)
        K, dim = G.shape[1], G.shape[2]
        vals = f(G.reshape(-1, dim)).reshape(Pr.shape[0], K)
        vals = np.where(np.any(np.isnan(G), axis=2), np.nan, vals)
        if np.any(np.all(np.isnan(vals), axis=1)):
            raise PreconditionError("jump map empty on jump set")
        return _nanmax(vals, 1)

    if isinstance(dist, FiniteSupport):
        if np.any(dist.probs <= 0):
            raise ConfigurationError("finite support lists an atom with zero probability")
        acc = np.zeros(N)
        for v, p in zip(dist.values, dist.probs):
            acc = acc + p * sup_over(P, np.broadcast_to(v, (N, v.size)))
        return acc, None
    if n_mc < 100:
        raise ConfigurationError("sampled expectations need n_mc >= 100")
    stream = RandomStream(seed, 0, MC_SUBSTREAM)
    k = dist.n_uniforms
    # inputs are drawn in stream order; each batch is evaluated at every point at once
    step = max(1, min(MC_BATCH, 2**20 // max(N, 1)))
    count, mean, m2 = 0, np.zeros(N), np.zeros(N)
    while count < n_mc:
        b = min(step, n_mc - count)
        U = stream.uniforms(b * k).reshape(b, k)
        V = np.array([dist.from_uniforms(u) for u in U])
        vals = sup_over(np.repeat(P, b, axis=0), np.tile(V, (N, 1))).reshape(N, b)
        bm = vals.mean(axis=1)
        bm2 = ((vals - bm[:, None]) ** 2).sum(axis=1)
        delta = bm - mean
        tot = count + b
        mean = mean + delta * (b / tot)
        m2 = m2 + bm2 + delta ** 2 * (count * b / tot)
        count = tot
    std = np.sqrt(m2 / (count - 1) / count)
    return mean, std


def jump_violation(aid: str, sys: SystemDefinition, cert: CertificateBundle, P: np.ndarray,
                   reduced: ReducedSystem | None = None, n_mc: int = 10_000,
                   seed: int = 0) -> tuple[np.ndarray, np.ndarray | None]:
    n1 = sys.n1
    dist = sys.jump_input
    full = lambda Y, Vb: sys.G.batch(Y[:, :n1], Y[:, n1:], Vb)
    if aid in ("A5",):
        _need(cert, "V", "rho_x", "c_x")
        red = _reduced(sys, reduced)
        e, std = expected_sup(cert.V, red.G_tilde.batch, P, dist, n_mc, seed)
        mu_J = cert.mu_J or 0.0
        return e - cert.V(P) + cert.k("c_x") * cert.rho_x(P) - mu_J * _indicator_O(cert, P), std
    if aid == "A8":
        _need(cert, "V", "rho_5", "k_5")
        red = _reduced(sys, reduced)
        X = P[:, :n1]
        e, std = expected_sup(cert.V, lambda Y, Vb: red.G_tilde.batch(Y[:, :n1], Vb), P, dist, n_mc, seed)
        return e - cert.V(X) - cert.k("k_5") * cert.rho_5(_qss(sys, P)), std
    if aid == "A3":
        _need(cert, "W", "rho_z", "c_z")
        e, std = expected_sup(cert.W, full, P, dist, n_mc, seed)
        return e - cert.W(P) + cert.k("c_z") * cert.rho_z(_qss(sys, P)), std
    if aid == "A7":
        _need(cert, "W", "rho_4", "k_4")
        e, std = expected_sup(cert.W, full, P, dist, n_mc, seed)
        return e - cert.W(P) - cert.k("k_4") * cert.rho_4(P[:, :n1]), std
    if aid in ("T1b", "T3b"):
        _need(cert, "V", "W", "rho_hat", "k_1", "k_3")
        theta = cert.k("k_3") / (cert.k("k_1") + cert.k("k_3"))
        E = compose_foster(cert, theta)
        e, std = expected_sup(E, full, P, dist, n_mc, seed)
        viol = e - E(P) + cert.rho_hat(P)
        if aid == "T3b":
            mu_J = cert.mu_J or 0.0
            viol = viol - mu_J * _tilde_O(sys, cert, P)
        return viol, std
    raise ConfigurationError(f"unknown jump inequality {aid!r}")


def check_jump_expectation(aid: str, sys: SystemDefinition, cert: CertificateBundle, grid: GridSpec | None = None,
                           n_mc: int = 10_000, seed: int = 0, tol: float = 1e-9, points=None,
                           reduced: ReducedSystem | None = None) -> ViolationReport:
    if aid not in JUMP_IDS:
        raise ConfigurationError(f"unknown jump inequality {aid!r}")
    P, gspec = _grid_points(aid, sys, grid, points)
    red = _reduced(sys, reduced) if aid in ("A5", "A8") else None
    if points is None:
        P = P[red.D_x.member(P)] if aid == "A5" else _domain(sys, P, "D")
    if P.shape[0] == 0:
        raise ConfigurationError(f"{aid}: no grid point lies in the jump set")
    viol, std = jump_violation(aid, sys, cert, P, red, n_mc, seed)
    rep = _finish(aid, gspec, viol, P, tol, std)
    rep.details["expectation"] = "exact_enumeration" if std is None else f"monte_carlo(n={n_mc})"
    if aid in ("T1b",):
        rep.details["min_margin"] = float(-np.max(viol))
    if aid == "T3b":
        rep.details["inflated_set_radius"] = cert.o_tilde_radius
    return rep


def violation_at(aid: str, sys: SystemDefinition, cert: CertificateBundle, point, **kwargs) -> float:
    """Re-evaluate one inequality at a single state (used to confirm witnesses)."""
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if aid in FLOW_IDS:
        return check_flow_inequality(aid, sys, cert, points=pts, **kwargs).max_violation
    if aid in BOUND_IDS:
        return check_bound_inequality(aid, sys, cert, points=pts, **kwargs).max_violation
    return check_jump_expectation(aid, sys, cert, points=pts, **kwargs).max_violation


def run_check(aid: str, sys, cert, grid, tol=1e-9, n_mc=10_000, seed=0, reduced=None, **kw) -> ViolationReport:
    if aid in FLOW_IDS:
        return check_flow_inequality(aid, sys, cert, grid, tol, reduced=reduced, seed=seed, **kw)
    if aid in BOUND_IDS:
        return check_bound_inequality(aid, sys, cert, grid, tol, reduced=reduced, seed=seed, **kw)
    if aid in JUMP_IDS:
        return check_jump_expectation(aid, sys, cert, grid, n_mc, seed, tol, reduced=reduced, **kw)
    raise ConfigurationError(f"unknown inequality {aid!r}")
