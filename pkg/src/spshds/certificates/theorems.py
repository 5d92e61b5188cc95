"""Condition checklists for the four stability and recurrence results.

A checklist aggregates class flags, the epsilon threshold, grid reports and
side inequalities. Its verdict is a screen: it passes only when every
required entry passes, and it never constitutes a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import SystemDefinition, build_reduced_system, check_quasi_steady_state, qss_distance
from ..errors import ConfigurationError, PreconditionError, SpshdsError
from .bundle import CertificateBundle, composite_flow_margin, compute_thresholds, quadratic_form_threshold
from .checks import GridSpec, run_check

PASS, FAIL, NOT_CHECKED = "pass", "fail", "not_checked"
THEOREMS = ("T1", "T2", "T3", "T4")
BASE_CHECKS = ("A2a", "A2b", "A4a", "A4b", "A6a", "A6b")

# certificate pieces each theorem needs before anything can be checked
REQUIRED_FIELDS = {
    "T1": ("V", "W", "alpha1", "alpha2", "alpha3", "alpha4", "phi_x", "phi_z", "rho_hat", "A",
           "k_x", "k_z", "k_1", "k_2", "k_3"),
    "T2": ("V", "W", "alpha1", "alpha2", "alpha3", "alpha4", "phi_x", "phi_z", "A",
           "k_x", "k_z", "k_1", "k_2", "k_3"),
    "T3": ("V", "W", "alpha1", "alpha2", "alpha3", "alpha4", "phi_x", "phi_z", "rho_hat", "A", "O",
           "o_tilde_radius", "k_x", "k_z", "k_1", "k_2", "k_3", "mu_F", "mu_J"),
    "T4": ("V", "W", "alpha1", "alpha2", "alpha3", "alpha4", "phi_x", "phi_z", "A", "O",
           "o_tilde_radius", "k_x", "k_z", "k_1", "k_2", "k_3"),
}


def missing_fields(cert: CertificateBundle | None, theorem: str) -> list[str]:
    if theorem not in REQUIRED_FIELDS:
        raise ConfigurationError(f"unknown theorem {theorem!r}")
    have = set() if cert is None else cert.present()
    return [f for f in REQUIRED_FIELDS[theorem] if f not in have]


@dataclass
class CheckConfig:
    grid: GridSpec
    tol: float = 1e-9
    n_mc: int = 10_000
    seed: int = 0
    level_set: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "CheckConfig":
        d = dict(d)
        unknown = set(d) - {"grid", "tol", "n_mc", "seed", "level_set"}
        if unknown:
            raise ConfigurationError(f"unknown verification keys: {sorted(unknown)}")
        g = d.pop("grid", {"low": -3.0, "high": 3.0, "n": 101})
        if isinstance(g.get("n"), int):
            grid = GridSpec.box(float(g["low"]), float(g["high"]), int(g["n"]), n)
        else:
            grid = GridSpec(tuple(g["low"]), tuple(g["high"]), tuple(g["n"]))
        return cls(grid=grid, **d)


@dataclass
class TheoremChecklist:
    theorem: str
    epsilon: float
    entries: list[dict]
    diagnostics: dict
    reports: dict
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e["status"] == PASS for e in self.entries)

    @property
    def verdict(self) -> str:
        return PASS if self.passed else FAIL

    def failing(self) -> list[str]:
        return [e["name"] for e in self.entries if e["status"] != PASS]

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "epsilon": self.epsilon,
            "verdict": self.verdict,
            "entries": self.entries,
            "diagnostics": self.diagnostics,
            "reports": self.reports,
            "notes": self.notes,
        }


class _Builder:
    def __init__(self):
        self.entries: list[dict] = []

    def add(self, name: str, ok: bool | None, detail: str = "", **extra):
        status = NOT_CHECKED if ok is None else (PASS if ok else FAIL)
        e = {"name": name, "status": status, "detail": detail}
        e.update(extra)
        self.entries.append(e)
        return status


def _report(aid, sys, cert, cfg: CheckConfig, cache: dict, reduced):
    if aid not in cache:
        try:
            cache[aid] = run_check(aid, sys, cert, cfg.grid, cfg.tol, cfg.n_mc, cfg.seed, reduced).to_dict()
        except SpshdsError as exc:
            cache[aid] = {"assumption": aid, "error": str(exc), "passed": None}
    return cache[aid]


def _report_entry(b: _Builder, rep: dict, name: str | None = None):
    aid = rep["assumption"]
    if rep.get("passed") is None:
        return b.add(name or aid, None, rep.get("error", ""))
    return b.add(name or aid, rep["passed"], f"max_violation={rep['max_violation']:.6g}")


def _slow_probe(sys, cert, cfg: CheckConfig):
    X = cfg.grid.points(sys.n1)
    zero = cert.A.cloud() if cert.A is not None else None
    off = X[cert.A.distance(X) > 1e-9] if cert.A is not None else None
    return X, zero, off


def _class_entry(b: _Builder, cert, name: str, required: str, zero=None, probe=None, off=None, label=None):
    f = getattr(cert, name)
    label = label or f"{name}_{required}"
    if f is None:
        return b.add(label, None, f"{name} not provided")
    ok, msg = f.satisfies(required, zero, probe, off)
    return b.add(label, ok, msg)


def _tilde_A(sys, cert):
    """Sample of the compact set {(x, z): x in A, z in M(x)}."""
    X = cert.A.cloud()
    W = sys.M.batch(X)
    rows = []
    for i in range(X.shape[0]):
        for w in W[i]:
            if not np.any(np.isnan(w)):
                rows.append(np.concatenate([X[i], w]))
    return np.array(rows)


def _rho_hat_entries(b, sys, cert, cfg, theorem):
    f = cert.rho_hat
    if f is None:
        return b.add("rho_hat", None, "rho_hat not provided")
    Y = cfg.grid.points(sys.n)
    if theorem == "T1":
        zero = _tilde_A(sys, cert)
        d, _ = qss_distance(sys.M, Y[:, : sys.n1], Y[:, sys.n1:])
        off = Y[(cert.A.distance(Y[:, : sys.n1]) > 1e-9) | (d > 1e-9)]
        ok, msg = f.satisfies("PD_wrt_set", zero, Y, off)
        return b.add("rho_hat_PD_wrt_A_tilde", ok, msg + " (sampled off the set only)")
    vals = f(Y)
    ok = bool(np.all(np.isfinite(vals)) and np.all(vals > 0))
    return b.add("rho_hat_positive", ok, f"min={float(np.min(vals)):.6g} on grid")


def _same_function(f, g, X) -> bool:
    return f is not None and g is not None and bool(np.max(np.abs(f(X) - g(X))) <= 1e-12)


def _jump_options(b, sys, cert, cfg, cache, reduced, theorem):
    """Either (A5 + A7, rho_x = rho_4, k3 k4 / k1 < c_x) or (A3 + A8, rho_z = rho_5, k1 k5 / k3 < c_z)."""
    X = cfg.grid.points(sys.n1)
    s = np.linspace(0.0, 10.0, 201)
    opts = {}
    zero_mu = theorem == "T2"

    def opt(items):
        ok = all(v is True for v in items.values())
        return ok, items

    items1 = {}
    if all(getattr(cert, n) is not None for n in ("rho_x", "rho_4", "c_x", "k_4")):
        r5 = _report("A5", sys, cert, cfg, cache, reduced)
        r7 = _report("A7", sys, cert, cfg, cache, reduced)
        items1["A5"] = r5.get("passed")
        items1["A7"] = r7.get("passed")
        items1["rho_x_equals_rho_4"] = _same_function(cert.rho_x, cert.rho_4, X)
        lhs = cert.k("k_3") * cert.k("k_4") / cert.k("k_1")
        items1[f"k3*k4/k1={lhs:.6g} < c_x={cert.k('c_x'):.6g}"] = bool(lhs < cert.k("c_x"))
        if zero_mu:
            items1["mu_J_zero"] = (cert.mu_J or 0.0) == 0.0
    opts["option_1"] = opt(items1) if items1 else (None, {"reason": "rho_x, rho_4, c_x or k_4 not provided"})
    items2 = {}
    if all(getattr(cert, n) is not None for n in ("rho_z", "rho_5", "c_z", "k_5")):
        r3 = _report("A3", sys, cert, cfg, cache, reduced)
        r8 = _report("A8", sys, cert, cfg, cache, reduced)
        items2["A3"] = r3.get("passed")
        items2["A8"] = r8.get("passed")
        items2["rho_z_equals_rho_5"] = _same_function(cert.rho_z, cert.rho_5, s)
        lhs = cert.k("k_1") * cert.k("k_5") / cert.k("k_3")
        items2[f"k1*k5/k3={lhs:.6g} < c_z={cert.k('c_z'):.6g}"] = bool(lhs < cert.k("c_z"))
    opts["option_2"] = opt(items2) if items2 else (None, {"reason": "rho_z, rho_5, c_z or k_5 not provided"})
    any_ok = any(v[0] for v in opts.values())
    checked = any(v[0] is not None for v in opts.values())
    detail = {k: {"status": NOT_CHECKED if v[0] is None else (PASS if v[0] else FAIL), "items": v[1]}
              for k, v in opts.items()}
    return b.add("jump_condition_option", any_ok if checked else None,
                 "at least one jump option must hold", options=detail)


def _level_set_entry(b, sys, cert, eps, cfg: CheckConfig, theta, exec_config, exclude_tilde_O: bool):
    from ..montecarlo import check_level_set_nonstationarity, tilde_O_predicate
    from .bundle import compose_foster

    ls = dict(cfg.level_set)
    if ls.get("skip"):
        return b.add("level_set_nonstationarity", None, "skipped by configuration")
    E = compose_foster(cert, theta)
    exclude = tilde_O_predicate(sys, cert) if exclude_tilde_O else None
    try:
        rep = check_level_set_nonstationarity(
            sys, E, ls.get("c_grid", [0.05, 0.25, 1.0]), int(ls.get("n_per_level", 8)),
            float(ls.get("duration", 5.0)), exclude, int(ls.get("seed", cfg.seed)), eps=eps,
            exec_config=exec_config, probe_low=cfg.grid.low, probe_high=cfg.grid.high,
        )
    except SpshdsError as exc:
        return b.add("level_set_nonstationarity", None, str(exc))
    return b.add("level_set_nonstationarity", not rep["stationary_levels"],
                 "heuristic, non-conclusive: sampled solutions near each level set",
                 report=rep)


def evaluate_theorem(sys: SystemDefinition, cert: CertificateBundle, eps: float, theorem: str,
                     cfg: CheckConfig, cache: dict | None = None, exec_config: Any = None) -> TheoremChecklist:
    """Aggregate every condition of one theorem into a checklist.

    ``cache`` keeps epsilon-independent reports so sweeps reuse them.
    """
    if theorem not in THEOREMS:
        raise ConfigurationError(f"unknown theorem {theorem!r}")
    cache = {} if cache is None else cache
    b = _Builder()
    diagnostics: dict = {}
    notes: list[str] = []
    missing = missing_fields(cert, theorem)
    if missing:
        for name in missing:
            b.add(f"field_{name}", None, "missing from the certificate")
        return TheoremChecklist(theorem, float(eps), b.entries, {"missing_fields": missing}, {}, notes)

    kx, kz, k1, k2, k3 = (cert.k(n) for n in ("k_x", "k_z", "k_1", "k_2", "k_3"))
    eps_star, theta_star = compute_thresholds(kx, kz, k1, k2, k3)
    eps_q = quadratic_form_threshold(kx, kz, k1, k2, k3)
    diagnostics.update(eps_star=eps_star, theta_star=theta_star, eps_star_quadratic_form=eps_q,
                       thresholds_agree=bool(abs(eps_star - eps_q) <= 1e-12 * max(1.0, eps_star)))
    if eps > 0:
        lam, pd = composite_flow_margin(kx, kz, k1, k2, k3, theta_star, eps)
        diagnostics["composite_flow_margin"] = {"lambda_min": lam, "positive_definite": pd}
    if not diagnostics["thresholds_agree"]:
        notes.append("the printed threshold and the quadratic-form threshold differ for these constants")

    reduced = build_reduced_system(sys, seed=cfg.seed)
    X = cfg.grid.points(sys.n1)
    stable = theorem in ("T1", "T2")

    # quasi-steady-state map
    cx = reduced.C_x.member(X)
    problems = check_quasi_steady_state(sys, X[cx], seed=cfg.seed)
    if stable:
        b.add("assumption_1_qss_map", not problems, problems[0]["message"] if problems else "nonempty and inside C_z")
    else:
        single = sys.qss_single_valued
        b.add("assumption_9_single_valued_qss", single and not problems,
              "single-valued m with m(x) in C_z" if single and not problems else
              (problems[0]["message"] if problems else "quasi-steady-state map is not single-valued"))
    b.add("epsilon_in_(0,eps_star)", bool(0 < eps < eps_star), f"epsilon={eps:.6g}, eps_star={eps_star:.6g}")

    for aid in BASE_CHECKS:
        _report_entry(b, _report(aid, sys, cert, cfg, cache, reduced))

    Xp, zero, off = _slow_probe(sys, cert, cfg)
    if stable:
        for i in range(1, 5):
            _class_entry(b, cert, f"alpha{i}", "Kinf")
        kind = "PD" if theorem == "T1" else "PsD"
        _class_entry(b, cert, "phi_x", f"{kind}_wrt_set", zero, Xp, off, f"phi_x_{kind}_wrt_A")
        _class_entry(b, cert, "phi_z", kind, label=f"phi_z_{kind}")
        b.add("mu_F_zero", (cert.mu_F or 0.0) == 0.0, f"mu_F={cert.mu_F or 0.0}; the 'mu=0' condition read as mu_F=0")
    else:
        for i in range(1, 5):
            _class_entry(b, cert, f"alpha{i}", "Ginf")
        b.add("A_equals_closure_of_O", cert.A.same_closure(cert.O), f"A={cert.A.to_config()}, O={cert.O.to_config()}")

    if theorem == "T1":
        _report_entry(b, _report("T1b", sys, cert, cfg, cache, reduced))
        _rho_hat_entries(b, sys, cert, cfg, theorem)
        notes.append("the verdict concerns the full two-time-scale system")
    elif theorem == "T3":
        b.add("mu_F_positive", cert.mu_F > 0, f"mu_F={cert.mu_F}")
        b.add("mu_J_positive", cert.mu_J > 0, f"mu_J={cert.mu_J}")
        _report_entry(b, _report("T3b", sys, cert, cfg, cache, reduced))
        _rho_hat_entries(b, sys, cert, cfg, theorem)
    else:
        _jump_options(b, sys, cert, cfg, cache, reduced, theorem)
        _level_set_entry(b, sys, cert, eps, cfg, theta_star, exec_config, exclude_tilde_O=theorem == "T4")
    if theorem in ("T3", "T4"):
        notes.append(f"recurrence target is the inflated set {{x in O, |z - m(x)| < {cert.o_tilde_radius}}}")

    reports = {aid: cache[aid] for aid in sorted(cache)}
    return TheoremChecklist(theorem, float(eps), b.entries, diagnostics, reports, notes)
