"""Seeded Monte Carlo estimates of stability in probability and recurrence."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import beta

from .core import SystemDefinition, qss_distance
from .errors import ConfigurationError, PreconditionError
from .executor import BLOW_UP, STOPPED, ExecConfig, map_trials, solve
from .regions import Region
from .streams import INIT

MAX_REJECTIONS = 100
STATIONARY_TOL = 1e-6


def binomial_lower_bound(n_success: int, n_trials: int, confidence: float = 0.95) -> float:
    """One-sided exact (Clopper-Pearson) lower confidence bound for a success rate."""
    if isinstance(n_success, bool) or isinstance(n_trials, bool):
        raise ConfigurationError("counts must be integers")
    if n_trials < 1 or not 0 <= n_success <= n_trials:
        raise ConfigurationError("need 0 <= n_success <= n_trials and n_trials >= 1")
    if not 0.0 < confidence < 1.0:
        raise ConfigurationError("confidence must lie in (0, 1)")
    if n_success == 0:
        return 0.0
    return float(beta.ppf(1.0 - confidence, n_success, n_trials - n_success + 1))


@dataclass
class EnsembleEstimate:
    n_trials: int
    n_success: int
    point_estimate: float
    lower_bound: float
    confidence: float
    criterion: dict
    seed: int
    counts: dict = field(default_factory=dict)
    trials: list[dict] = field(default_factory=list)

    @classmethod
    def from_trials(cls, trials: list[dict], confidence: float, criterion: dict, seed: int) -> "EnsembleEstimate":
        n = len(trials)
        k = sum(1 for t in trials if t["success"])
        counts: dict = {}
        for t in trials:
            counts[t["stop_reason"]] = counts.get(t["stop_reason"], 0) + 1
        return cls(n, k, k / n, binomial_lower_bound(k, n, confidence), confidence, criterion, seed,
                   dict(sorted(counts.items())), trials)

    def summary(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "n_success": self.n_success,
            "point_estimate": self.point_estimate,
            "lower_bound": self.lower_bound,
            "confidence": self.confidence,
            "criterion": self.criterion,
            "seed": self.seed,
            "stop_reasons": self.counts,
        }

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "success", "hitting_time", "stop_reason"])
            for t in self.trials:
                ht = t.get("hitting_time")
                w.writerow([t["trial"], int(t["success"]), "" if ht is None else repr(ht), t["stop_reason"]])
        Path(json_path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _init_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, INIT])))


def _in_domain(sys: SystemDefinition, y: np.ndarray, tol: float) -> bool:
    Y = y[None]
    return bool(sys.C.member(Y, tol)[0] or sys.D.member(Y, tol)[0])


def _sample_initial(sys, rng, centers: np.ndarray, radius: float, shell: bool, tol: float) -> np.ndarray:
    """Uniform point in the radius ball around a random center, rejected against C ∪ D."""
    n = centers.shape[1]
    for _ in range(MAX_REJECTIONS):
        c = centers[int(rng.integers(centers.shape[0]))]
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        r = radius if shell else radius * rng.random() ** (1.0 / n)
        y = c + r * d
        if _in_domain(sys, y, tol):
            return y
    raise PreconditionError("no valid initial conditions found after bounded rejection sampling")


def tilde_A_cloud(sys: SystemDefinition, A: Region, spacing: float = 0.05) -> np.ndarray:
    """Finite sample of {(x, z): x in A, z in M(x)}."""
    X = A.cloud(spacing)
    W = sys.M.batch(X)
    rows = [np.concatenate([X[i], w]) for i in range(X.shape[0]) for w in W[i] if not np.any(np.isnan(w))]
    if not rows:
        raise PreconditionError("the attractor sample is empty")
    return np.array(rows)


def tilde_O_predicate(sys: SystemDefinition, cert=None, O: Region | None = None, radius: float | None = None):
    """Indicator of the inflated target {x in O (open), |z|_{M(x)} < radius}."""
    O = O if O is not None else cert.O
    radius = radius if radius is not None else cert.o_tilde_radius
    if O is None or radius is None or not radius > 0:
        raise ConfigurationError("target set needs an open slow region and a positive radius")

    def member(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        d, _ = qss_distance(sys.M, Y[:, : sys.n1], Y[:, sys.n1:])
        return O.contains_open(Y[:, : sys.n1]) & (d < radius)

    return member


def estimate_stability_in_probability(sys: SystemDefinition, cert, eps: float, delta: float, eps_ball: float,
                                      T: float, N: int, seed: int = 0, exec_config: ExecConfig | None = None,
                                      workers: int = 1, confidence: float = 0.95, shell: bool = False,
                                      attract_radius: float | None = None, spacing: float = 0.05) -> EnsembleEstimate:
    """Fraction of solutions from the delta-neighborhood of the attractor that stay and settle.

    Success means every stored node stays within ``eps_ball`` of the
    attractor and every node with ``t + j >= T`` lies within
    ``attract_radius`` (default ``eps_ball / 10``).
    """
    if not (delta > 0 and eps_ball > 0 and T > 0):
        raise ConfigurationError("delta, eps_ball and T must be positive")
    if N < 1:
        raise ConfigurationError("N must be at least 1")
    inner = eps_ball / 10.0 if attract_radius is None else float(attract_radius)
    cloud = tilde_A_cloud(sys, cert.A, spacing)
    tree = cKDTree(cloud)
    base = exec_config or ExecConfig()
    horizon = T + max(1.0, 0.1 * T)
    cfg = ExecConfig(base.flow, base.J_max, horizon, base.overlap_policy, base.jump_selection_policy)
    tol = cfg.flow.tol_set

    def trial(k):
        y0 = _sample_initial(sys, _init_rng(seed, k), cloud, delta, shell, tol)
        rec = solve(sys, y0, eps, cfg, seed=seed, trial=k)
        t, j, Y = rec.arc.nodes()
        dist = tree.query(Y)[0]
        late = (t + j) >= T
        stay = bool(np.all(dist < eps_ball))
        settle = bool(np.all(dist[late] < inner))
        ok = stay and settle and rec.stop_reason != BLOW_UP
        return {"trial": k, "success": ok, "hitting_time": None, "stop_reason": rec.stop_reason,
                "max_distance": float(dist.max()), "final_distance": float(dist[-1])}

    trials = map_trials(trial, N, workers)
    criterion = {"event": "stay_and_settle", "epsilon": eps, "delta": delta, "eps_ball": eps_ball, "T": T,
                 "attract_radius": inner, "initial": "shell" if shell else "ball", "horizon": horizon}
    return EnsembleEstimate.from_trials(trials, confidence, criterion, seed)


@dataclass(frozen=True)
class RecurrenceConfig:
    O_slow: Region
    delta_O: float
    R: float
    tau: float
    N: int

    def __post_init__(self):
        if not self.delta_O > 0:
            raise ConfigurationError("delta_O must be positive")
        if not self.tau >= 0 or not self.R > 0:
            raise ConfigurationError("tau must be nonnegative and R positive")
        if self.N < 1:
            raise ConfigurationError("N must be at least 1")


def estimate_recurrence(sys: SystemDefinition, rc: RecurrenceConfig, eps: float,
                        exec_config: ExecConfig | None = None, seed: int = 0, workers: int = 1,
                        confidence: float = 0.95) -> EnsembleEstimate:
    """Fraction of solutions from the R-ball that stop early or visit the inflated target by t + j <= tau.

    The target is {x in O (open), |z|_{M(x)} < delta_O}; a blow-up is always a failure.
    """
    target = tilde_O_predicate(sys, O=rc.O_slow, radius=rc.delta_O)
    base = exec_config or ExecConfig()
    tol = base.flow.tol_set
    centre = np.zeros((1, sys.n))
    cfg = None
    if rc.tau > 0:
        cfg = ExecConfig(base.flow, base.J_max, rc.tau, base.overlap_policy, base.jump_selection_policy)

    def trial(k):
        y0 = _sample_initial(sys, _init_rng(seed, k), centre, rc.R, False, tol)
        if target(y0)[0]:
            return {"trial": k, "success": True, "hitting_time": 0.0, "stop_reason": "hit_at_start"}
        if cfg is None:
            return {"trial": k, "success": False, "hitting_time": None, "stop_reason": "empty_horizon"}
        rec = solve(sys, y0, eps, cfg, seed=seed, trial=k)
        t, j, Y = rec.arc.nodes()
        s = t + j
        hit = target(Y) & (s <= rc.tau)
        if rec.stop_reason == BLOW_UP:
            return {"trial": k, "success": False, "hitting_time": None, "stop_reason": BLOW_UP}
        if np.any(hit):
            return {"trial": k, "success": True, "hitting_time": float(s[np.argmax(hit)]),
                    "stop_reason": rec.stop_reason}
        early = rec.stop_reason == STOPPED and s[-1] < rc.tau
        return {"trial": k, "success": bool(early), "hitting_time": None, "stop_reason": rec.stop_reason}

    trials = map_trials(trial, rc.N, workers)
    criterion = {"event": "stop_or_visit_target", "epsilon": eps, "R": rc.R, "tau": rc.tau, "delta_O": rc.delta_O,
                 "O_slow": rc.O_slow.to_config(),
                 "target": "inflated set {x in O, |z - m(x)| < delta_O} stands in for the graph of m over O"}
    est = EnsembleEstimate.from_trials(trials, confidence, criterion, seed)
    est.counts["finite_escape_candidates"] = est.counts.get(BLOW_UP, 0)
    return est


def sweep_epsilon(sys: SystemDefinition, cert, eps_grid, stability: dict, seed: int = 0, theorem: str = "T1",
                  check_config=None, exec_config: ExecConfig | None = None, workers: int = 1) -> list[dict]:
    """Checklist verdict and empirical stability estimate for every epsilon, ordered by epsilon."""
    from .certificates.checks import GridSpec
    from .certificates.theorems import CheckConfig, evaluate_theorem

    grid = sorted(float(e) for e in eps_grid)
    if not grid or any(not e > 0 for e in grid):
        raise ConfigurationError("epsilon grid must be nonempty and positive")
    if check_config is None:
        check_config = CheckConfig(GridSpec.box(-3.0, 3.0, 41, sys.n))
    cache: dict = {}
    rows = []
    for eps in grid:
        chk = evaluate_theorem(sys, cert, eps, theorem, check_config, cache, exec_config)
        est = estimate_stability_in_probability(sys, cert, eps, seed=seed, exec_config=exec_config,
                                                workers=workers, **stability)
        rows.append({"epsilon": eps, "verdict": chk.verdict, "failing": chk.failing(), "estimate": est})
    return rows


def _level_points(E, c: float, low: np.ndarray, high: np.ndarray, count: int, rng, accept) -> np.ndarray:
    """Points with E = c found by bisection along random rays from the sampled minimizer."""
    n = low.size
    probe = low + (high - low) * rng.random((4096, n))
    vals = E(probe)
    y0 = probe[int(np.argmin(vals))]
    if not E(y0[None])[0] < c:
        return np.empty((0, n))
    span = float(np.max(high - low))
    out = []
    for _ in range(50 * count):
        if len(out) >= count:
            break
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        hi = 0.0
        r = span / 64
        while r <= 4 * span:
            if E((y0 + r * d)[None])[0] >= c:
                hi = r
                break
            r *= 2
        if hi == 0.0:
            continue
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if E((y0 + mid * d)[None])[0] < c:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
        y = y0 + hi * d
        if abs(E(y[None])[0] - c) <= 1e-9 * max(1.0, c) and accept(y):
            out.append(y)
    return np.array(out).reshape(-1, n)


def check_level_set_nonstationarity(sys: SystemDefinition, E, c_grid, n_per_level: int, duration: float,
                                    exclude=None, seed: int = 0, eps: float = 0.1,
                                    exec_config: ExecConfig | None = None, probe_low=None, probe_high=None) -> dict:
    """Heuristic screen for solutions that remain on a level set of E.

    For every level c, solutions start on sampled points of {E = c} (outside
    ``exclude``) and the largest drift |E(y) - c| over the horizon is
    recorded. A level is flagged when every sampled solution stays within
    1e-6 of c. Passing the screen is not a proof.
    """
    levels = [float(c) for c in c_grid]
    if not levels or any(not c > 0 for c in levels):
        raise ConfigurationError("level values must be positive")
    if n_per_level < 1 or not duration > 0:
        raise ConfigurationError("n_per_level must be positive and duration positive")
    low = np.asarray(probe_low if probe_low is not None else sys.probe_low, dtype=float)
    high = np.asarray(probe_high if probe_high is not None else sys.probe_high, dtype=float)
    base = exec_config or ExecConfig()
    cfg = ExecConfig(base.flow, base.J_max, duration, base.overlap_policy, base.jump_selection_policy)
    tol = cfg.flow.tol_set

    def accept(y):
        return _in_domain(sys, y, tol) and not (exclude is not None and bool(exclude(y[None])[0]))

    report = []
    trial = 0
    for li, c in enumerate(levels):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, li, INIT, 1])))
        pts = _level_points(E, c, low, high, n_per_level, rng, accept)
        if pts.shape[0] == 0:
            raise PreconditionError(f"no points found on level {c} after bounded search")
        drifts = []
        for y0 in pts:
            rec = solve(sys, y0, eps, cfg, seed=seed, trial=trial)
            trial += 1
            drifts.append(float(np.max(np.abs(E(rec.arc.nodes()[2]) - c))))
        report.append({"c": c, "n_samples": len(drifts), "min_drift": min(drifts), "max_drift": max(drifts),
                       "stationary": bool(max(drifts) <= STATIONARY_TOL)})
    return {
        "levels": report,
        "stationary_levels": [r["c"] for r in report if r["stationary"]],
        "conclusive": False,
        "tolerance": STATIONARY_TOL,
    }


def coverage_fraction(p: float, n: int, n_meta: int, confidence: float = 0.95, seed: int = 0) -> float:
    """Share of synthetic Bernoulli(p) experiments whose lower bound does not exceed p."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 99])))
    ks = rng.binomial(n, p, size=n_meta)
    return float(np.mean([binomial_lower_bound(int(k), n, confidence) <= p for k in ks]))


def zero_failure_bound(n: int, confidence: float = 0.95) -> float:
    return math.pow(1.0 - confidence, 1.0 / n)
