"""Data model for singularly perturbed stochastic hybrid systems.

Set-valued maps are finite selection bundles evaluated in batches: a map
returns an array of shape (N, K, dim) where NaN rows mark selections that
are absent at that point. A point whose rows are all NaN has an empty
image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .errors import AssumptionViolation, ConfigurationError, PreconditionError


@dataclass(frozen=True, eq=False)
class SelectionBundle:
    values: np.ndarray
    convexified: bool = False

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.ndim != 2 or vals.shape[0] == 0:
            raise ConfigurationError("selection bundle must be a nonempty list of equal-length vectors")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def contains(self, vec, atol: float = 0.0) -> bool:
        """Exact (or ``atol``) membership among the listed selections."""
        vec = np.asarray(vec, dtype=float)
        return bool(np.any(np.all(np.abs(self.values - vec) <= atol, axis=1)))


def _rows(arr: np.ndarray) -> np.ndarray:
    """Drop NaN padding rows of a single-point bundle array (K, d)."""
    keep = ~np.any(np.isnan(arr), axis=1)
    return arr[keep]


@dataclass(frozen=True, eq=False)
class SetValuedMap:
    """Batched set-valued map ``fn(*arrays) -> (N, K, dim)``."""

    fn: Callable[..., np.ndarray]
    dim: int
    convexified: bool = False
    name: str = ""

    def batch(self, *args) -> np.ndarray:
        arrays = [np.atleast_2d(np.asarray(a, dtype=float)) for a in args]
        out = np.asarray(self.fn(*arrays), dtype=float)
        if out.ndim == 2:
            out = out[:, None, :]
        if out.ndim != 3 or out.shape[0] != arrays[0].shape[0] or out.shape[2] != self.dim:
            raise ConfigurationError(
                f"map {self.name or self.fn!r} returned shape {out.shape}; "
                f"expected ({arrays[0].shape[0]}, K, {self.dim})"
            )
        return out

    def bundle(self, *args) -> SelectionBundle:
        """Bundle at a single point; raises if the image is empty."""
        rows = _rows(self.batch(*[np.asarray(a, dtype=float)[None, :] for a in args])[0])
        if rows.shape[0] == 0:
            raise AssumptionViolation(f"map {self.name or 'F'} has an empty image", witness=args)
        return SelectionBundle(rows, self.convexified and rows.shape[0] > 1)

    @classmethod
    def pointwise(cls, f: Callable[..., Any], dim: int, convexified: bool = False, name: str = ""):
        """Wrap a per-point function returning vectors (or a bundle) into a batch map."""

        def fn(*arrays):
            outs = []
            for row in zip(*arrays):
                val = f(*row)
                if isinstance(val, SelectionBundle):
                    val = val.values
                val = np.asarray(val, dtype=float)
                if val.size == 0:
                    val = np.empty((0, dim))
                outs.append(np.atleast_2d(val).reshape(-1, dim))
            k = max((o.shape[0] for o in outs), default=1) or 1
            res = np.full((len(outs), k, dim), np.nan)
            for i, o in enumerate(outs):
                res[i, : o.shape[0]] = o
            return res

        return cls(fn, dim, convexified, name)


@dataclass(frozen=True, eq=False)
class SetPredicate:
    """Membership test with an optional signed proximity (negative inside)."""

    contains: Callable[[np.ndarray], np.ndarray]
    proximity: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def member(self, Y, tol: float = 0.0) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        inside = np.asarray(self.contains(Y), dtype=bool).reshape(-1)
        if self.proximity is not None and tol > 0:
            inside = inside | (np.asarray(self.proximity(Y)).reshape(-1) <= tol)
        return inside

    @classmethod
    def from_proximity(cls, prox: Callable[[np.ndarray], np.ndarray], name: str = ""):
        return cls(lambda Y: prox(Y) <= 0.0, prox, name)

    @classmethod
    def everything(cls):
        return cls.from_proximity(lambda Y: np.full(np.atleast_2d(Y).shape[0], -1.0), "all")

    @classmethod
    def nothing(cls):
        return cls.from_proximity(lambda Y: np.full(np.atleast_2d(Y).shape[0], 1.0), "empty")


def set_membership(y, pred: SetPredicate, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ConfigurationError("tolerance must be nonnegative")
    return bool(pred.member(np.asarray(y, dtype=float)[None, :], tol)[0])


class HybridTime(NamedTuple):
    t: float
    j: int


@dataclass(eq=False)
class ArcSegment:
    j: int
    times: np.ndarray
    states: np.ndarray

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


@dataclass(eq=False)
class JumpPoint:
    time: HybridTime
    pre: np.ndarray
    post: np.ndarray


@dataclass(eq=False)
class HybridArc:
    segments: list[ArcSegment] = field(default_factory=list)
    jump_points: list[JumpPoint] = field(default_factory=list)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_points)

    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All stored nodes as (t, j, states) in hybrid-time order."""
        if not self.segments:
            return np.empty(0), np.empty(0, dtype=int), np.empty((0, 0))
        t = np.concatenate([s.times for s in self.segments])
        j = np.concatenate([np.full(s.times.size, s.j, dtype=int) for s in self.segments])
        y = np.concatenate([s.states for s in self.segments])
        return t, j, y

    @property
    def final_state(self) -> np.ndarray:
        return self.segments[-1].states[-1]

    @property
    def final_time(self) -> HybridTime:
        seg = self.segments[-1]
        return HybridTime(seg.t_end, seg.j)

    def check_domain(self) -> None:
        """Raise if the arc is not a valid hybrid time domain with finite states."""
        for k, seg in enumerate(self.segments):
            if seg.j != k:
                raise AssertionError(f"segment {k} carries jump index {seg.j}")
            if seg.times.size == 0 or np.any(np.diff(seg.times) <= 0):
                raise AssertionError(f"segment {k} times are not strictly increasing")
            if not np.all(np.isfinite(seg.states)):
                raise AssertionError(f"segment {k} stores a non-finite state")
            if k + 1 < len(self.segments) and seg.t_end != self.segments[k + 1].t_start:
                raise AssertionError(f"segments {k} and {k + 1} do not share a jump time")
        if len(self.jump_points) != max(len(self.segments) - 1, 0):
            raise AssertionError("jump count does not match segment count")


@dataclass(frozen=True, eq=False)
class FiniteSupport:
    """Jump inputs drawn from finitely many atoms."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        probs = np.asarray(self.probs, dtype=float).ravel()
        if vals.ndim != 2 or vals.shape[0] == 0 or probs.size != vals.shape[0]:
            raise ConfigurationError("finite support needs one probability per atom")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"probabilities must be nonnegative and sum to 1, got {probs.sum()!r}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return self.values[int(np.searchsorted(self._cdf, u[0], side="right"))].copy()

    @property
    def n_uniforms(self) -> int:
        return 1

    def sample(self, stream) -> np.ndarray:
        return self.from_uniforms(stream.uniforms(1))

    def to_config(self) -> dict:
        return {"finite": {"values": self.values.tolist(), "probs": self.probs.tolist()}}


@dataclass(frozen=True, eq=False)
class UniformBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.low, dtype=float))
        hi = np.atleast_1d(np.asarray(self.high, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi < lo):
            raise ConfigurationError("uniform box bounds must be ordered vectors of equal length")
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    @property
    def dim(self) -> int:
        return self.low.size

    @property
    def n_uniforms(self) -> int:
        return self.low.size

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return self.low + (self.high - self.low) * u

    def sample(self, stream) -> np.ndarray:
        return self.from_uniforms(stream.uniforms(self.low.size))

    def to_config(self) -> dict:
        return {"uniform_box": {"low": self.low.tolist(), "high": self.high.tolist()}}


JumpInputDistribution = FiniteSupport | UniformBox


@dataclass(frozen=True, eq=False)
class SystemDefinition:
    n1: int
    n2: int
    F_x: SetValuedMap
    F_z: SetValuedMap
    G: SetValuedMap
    C: SetPredicate
    D: SetPredicate
    jump_input: JumpInputDistribution
    M: SetValuedMap
    qss_single_valued: bool = False
    probe_low: np.ndarray | None = None
    probe_high: np.ndarray | None = None
    compiled: Any = None
    name: str = ""
    source: dict | None = None

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigurationError("n1 and n2 must be at least 1")
        n = self.n1 + self.n2
        if self.F_x.dim != self.n1 or self.F_z.dim != self.n2 or self.G.dim != n or self.M.dim != self.n2:
            raise ConfigurationError("map dimensions are inconsistent with (n1, n2)")
        lo = -np.ones(n) if self.probe_low is None else np.asarray(self.probe_low, dtype=float)
        hi = np.ones(n) if self.probe_high is None else np.asarray(self.probe_high, dtype=float)
        if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
            raise ConfigurationError("probe box must be an ordered box in the full state space")
        object.__setattr__(self, "probe_low", lo)
        object.__setattr__(self, "probe_high", hi)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def split(self, Y) -> tuple[np.ndarray, np.ndarray]:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return Y[:, : self.n1], Y[:, self.n1:]

    def z_samples(self, count: int, seed: int = 0) -> np.ndarray:
        """Deterministic fast-state samples from the probe box (for D_z / C_z probing)."""
        if count <= 0:
            return np.empty((0, self.n2))
        rng = np.random.default_rng([seed, 7919])
        lo, hi = self.probe_low[self.n1:], self.probe_high[self.n1:]
        return lo + (hi - lo) * rng.random((count, self.n2))


def qss_distance(M: SetValuedMap, X, Z) -> tuple[np.ndarray, np.ndarray]:
    """Batched |z|_{M(x)}; returns (distances, empty-image mask)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    W = M.batch(X)
    diff = np.abs(W - Z[:, None, :])
    scale = np.max(diff, axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        # scaled norm so tiny or huge differences neither underflow nor overflow
        d = scale[..., 0] * np.sqrt(np.sum(np.where(scale > 0, diff / scale, 0.0) ** 2, axis=2))
    empty = np.all(np.isnan(d), axis=1)
    d = np.where(np.isnan(d), np.inf, d)
    return d.min(axis=1), empty


def distance_to_quasi_steady_state(x, z, M: SetValuedMap, return_exact: bool = False):
    """Distance from ``z`` to the finite bundle ``M(x)``.

    The value is exact for a finite set of selections. A convexified bundle
    represents its hull, for which the vertex distance over-approximates.
    """
    dist, empty = qss_distance(M, np.asarray(x, dtype=float)[None, :], np.asarray(z, dtype=float)[None, :])
    if empty[0]:
        raise AssumptionViolation("quasi-steady-state map empty at x", witness=np.asarray(x))
    value = float(dist[0])
    if return_exact:
        n_sel = int(np.sum(~np.any(np.isnan(M.batch(np.asarray(x, dtype=float)[None, :])[0]), axis=1)))
        return value, not (M.convexified and n_sel > 1)
    return value


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    F_tilde: SetValuedMap
    G_tilde: SetValuedMap
    C_x: SetPredicate
    D_x: SetPredicate
    z_samples: np.ndarray


def _z_candidates(sys: SystemDefinition, X: np.ndarray, z_samples: np.ndarray) -> np.ndarray:
    """Candidate fast states per slow state: M(x) selections followed by the fixed samples."""
    W = sys.M.batch(X)
    if z_samples.shape[0]:
        extra = np.broadcast_to(z_samples[None], (X.shape[0],) + z_samples.shape)
        W = np.concatenate([W, extra], axis=1)
    return W


def _project_member(sys: SystemDefinition, pred: SetPredicate, X: np.ndarray, z_samples: np.ndarray) -> np.ndarray:
    cand = _z_candidates(sys, X, z_samples)
    N, K, _ = cand.shape
    Y = np.concatenate([np.repeat(X, K, axis=0), cand.reshape(N * K, sys.n2)], axis=1)
    ok = ~np.any(np.isnan(Y), axis=1)
    mem = np.zeros(N * K, dtype=bool)
    if ok.any():
        mem[ok] = pred.member(Y[ok])
    return mem.reshape(N, K).any(axis=1)


def build_reduced_system(
    sys: SystemDefinition,
    z_samples_per_x: int = 8,
    n_interior: int = 0,
    seed: int = 0,
    probe_x: np.ndarray | None = None,
) -> ReducedSystem:
    """Reduced slow system on the quasi-steady-state map.

    ``F_tilde(x)`` lists the vertices ``F_x(x, w)`` for ``w`` in ``M(x)``
    (plus pairwise midpoints when ``n_interior > 0``); ``G_tilde(x, v)``
    lists slow components of ``G(x, z, v)`` over candidate ``z`` in ``D_z``.
    """
    if z_samples_per_x < 1:
        raise ConfigurationError("z_samples_per_x must be at least 1")
    zs = sys.z_samples(z_samples_per_x, seed)
    if probe_x is None:
        rng = np.random.default_rng([seed, 104729])
        lo, hi = sys.probe_low[: sys.n1], sys.probe_high[: sys.n1]
        probe_x = lo + (hi - lo) * rng.random((16, sys.n1))
    W = sys.M.batch(np.atleast_2d(probe_x))
    empty = np.all(np.any(np.isnan(W), axis=2), axis=1)
    if empty.any():
        bad = np.atleast_2d(probe_x)[int(np.argmax(empty))]
        raise AssumptionViolation("quasi-steady-state map empty at x", witness=bad)

    n1, n2 = sys.n1, sys.n2

    def f_tilde(X):
        Wm = sys.M.batch(X)
        N, Km, _ = Wm.shape
        Xr = np.repeat(X, Km, axis=0)
        F = sys.F_x.batch(Xr, Wm.reshape(N * Km, n2))
        Kf = F.shape[1]
        F = F.reshape(N, Km * Kf, n1)
        if n_interior > 0 and Km * Kf > 1:
            mids = []
            for a in range(Km * Kf):
                for b in range(a + 1, Km * Kf):
                    mids.append(0.5 * (F[:, a] + F[:, b]))
            F = np.concatenate([F, np.stack(mids, axis=1)], axis=1)
        return F

    def g_tilde(X, V):
        cand = _z_candidates(sys, X, zs)
        N, K, _ = cand.shape
        Xr = np.repeat(X, K, axis=0)
        Zr = cand.reshape(N * K, n2)
        Vr = np.repeat(V, K, axis=0)
        inD = np.zeros(N * K, dtype=bool)
        ok = ~np.any(np.isnan(Zr), axis=1)
        if ok.any():
            inD[ok] = sys.D.member(np.concatenate([Xr[ok], Zr[ok]], axis=1))
        out = np.full((N * K, 1, n1), np.nan)
        if inD.any():
            G = sys.G.batch(Xr[inD], Zr[inD], Vr[inD])
            out = np.full((N * K, G.shape[1], n1), np.nan)
            out[inD] = G[:, :, :n1]
        return out.reshape(N, -1, n1)

    multi = True
    return ReducedSystem(
        F_tilde=SetValuedMap(f_tilde, n1, convexified=multi, name="F_tilde"),
        G_tilde=SetValuedMap(g_tilde, n1, name="G_tilde"),
        C_x=SetPredicate(lambda X: _project_member(sys, sys.C, np.atleast_2d(X), zs), name="C_x"),
        D_x=SetPredicate(lambda X: _project_member(sys, sys.D, np.atleast_2d(X), zs), name="D_x"),
        z_samples=zs,
    )


@dataclass
class BasicConditionsReport:
    passed: bool
    failures: list[dict]
    bounds: dict
    n_probes: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "failures": self.failures, "bounds": self.bounds, "n_probes": self.n_probes}


def _box_probes(low, high, n_probes, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    pts = low + (high - low) * rng.random((n_probes, low.size))
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(low, high)], indexing="ij")).reshape(low.size, -1).T
    return np.concatenate([corners, pts])


def validate_basic_conditions(
    sys: SystemDefinition,
    probe_box: tuple[Sequence[float], Sequence[float]] | None = None,
    n_probes: int = 1000,
    seed: int = 0,
    epsilon: float = 1.0,
) -> BasicConditionsReport:
    """Sampling screen of closedness, domain, local boundedness and convexity.

    A pass is evidence only; outer semicontinuity and measurability are not
    decidable from point evaluations.
    """
    if n_probes < 1:
        raise ConfigurationError("n_probes must be at least 1")
    low, high = probe_box if probe_box is not None else (sys.probe_low, sys.probe_high)
    Y = _box_probes(low, high, n_probes, seed)
    X, Z = sys.split(Y)
    failures: list[dict] = []
    bounds: dict = {}

    def fail(check, idx, message):
        failures.append({"check": check, "witness": Y[idx].tolist(), "message": message})

    for label, pred in (("C", sys.C), ("D", sys.D)):
        if pred.proximity is None:
            continue
        mem = pred.member(Y)
        prox = np.asarray(pred.proximity(Y)).reshape(-1)
        bad = np.flatnonzero(mem != (prox <= 0))
        if bad.size:
            fail(f"{label}_proximity_consistent", bad[0], f"membership and proximity disagree for {label}")
        # boundary points between members and non-members must belong to a closed set
        ins, outs = np.flatnonzero(mem), np.flatnonzero(~mem)
        for a, b in zip(ins[:20], outs[:20]):
            lo, hi = Y[a].copy(), Y[b].copy()
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if pred.member(mid[None])[0]:
                    lo = mid
                else:
                    hi = mid
            if not pred.member(lo[None])[0] or float(np.asarray(pred.proximity(lo[None])).ravel()[0]) > 1e-9:
                failures.append({"check": f"{label}_closed", "witness": lo.tolist(),
                                 "message": f"{label} boundary point is not a member"})
                break

    inC = sys.C.member(Y)
    inD = sys.D.member(Y)
    if inC.any():
        Fx = sys.F_x.batch(X[inC], Z[inC])
        Fz = sys.F_z.batch(X[inC], Z[inC])
        idx = np.flatnonzero(inC)
        for name, F in (("F_x", Fx), ("F_z", Fz)):
            empty = np.all(np.any(np.isnan(F), axis=2), axis=1)
            if empty.any():
                fail("C_in_dom_F", idx[int(np.argmax(empty))], f"{name} has an empty image on C")
            counts = np.sum(~np.any(np.isnan(F), axis=2), axis=1)
            mapobj = sys.F_x if name == "F_x" else sys.F_z
            if not mapobj.convexified and np.any(counts > 1):
                distinct = [np.unique(_rows(F[i]), axis=0).shape[0] > 1 for i in range(F.shape[0])]
                if any(distinct):
                    fail("F_convex_valued", idx[int(np.argmax(distinct))],
                         f"{name} lists several selections without the convexified flag")
        nx = np.nanmax(np.sqrt(np.nansum(Fx ** 2, axis=2)), axis=1) if Fx.size else np.zeros(0)
        nz = np.nanmax(np.sqrt(np.nansum(Fz ** 2, axis=2)), axis=1) / epsilon if Fz.size else np.zeros(0)
        bounds["flow_x"] = float(np.nanmax(nx)) if nx.size else 0.0
        bounds["flow_z_over_eps"] = float(np.nanmax(nz)) if nz.size else 0.0
        bounds["flow"] = float(np.nanmax(np.sqrt(nx ** 2 + nz ** 2))) if nx.size else 0.0
        if not np.isfinite(bounds["flow"]):
            fail("F_locally_bounded", idx[0], "flow map is unbounded on the probe box")
    if inD.any():
        idx = np.flatnonzero(inD)
        dist = sys.jump_input
        if isinstance(dist, FiniteSupport):
            vs = dist.values
        else:
            rng = np.random.default_rng([seed, 31])
            vs = dist.from_uniforms(rng.random((64, dist.dim)))
            vs = np.concatenate([vs, dist.low[None], dist.high[None]])
        gmax = 0.0
        for v in vs:
            G = sys.G.batch(X[inD], Z[inD], np.broadcast_to(v, (idx.size, v.size)))
            empty = np.all(np.any(np.isnan(G), axis=2), axis=1)
            if empty.any():
                fail("D_in_dom_G", idx[int(np.argmax(empty))], "jump map has an empty image on D")
                break
            gmax = max(gmax, float(np.nanmax(np.sqrt(np.nansum(G ** 2, axis=2)))))
        bounds["jump"] = gmax
        if not np.isfinite(gmax):
            fail("G_locally_bounded", idx[0], "jump map is unbounded on the probe box")
    return BasicConditionsReport(not failures, failures, bounds, int(Y.shape[0]))


def check_quasi_steady_state(sys: SystemDefinition, X, z_samples_per_x: int = 8, seed: int = 0) -> list[dict]:
    """Spot-check that M(x) is nonempty and lies in C_z for sampled x in C_x."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    zs = sys.z_samples(z_samples_per_x, seed)
    problems = []
    W = sys.M.batch(X)
    empty = np.all(np.any(np.isnan(W), axis=2), axis=1)
    for i in np.flatnonzero(empty)[:1]:
        problems.append({"witness": X[i].tolist(), "message": "quasi-steady-state map empty at x"})
    inCx = _project_member(sys, sys.C, X, zs)
    for i in np.flatnonzero(inCx & ~empty):
        rows = _rows(W[i])
        Y = np.concatenate([np.repeat(X[i][None], rows.shape[0], axis=0), rows], axis=1)
        if not np.all(sys.C.member(Y)):
            problems.append({"witness": X[i].tolist(), "message": "M(x) is not contained in C_z"})
            break
    return problems


def apply_precondition(ok: bool, message: str) -> None:
    if not ok:
        raise PreconditionError(message)
