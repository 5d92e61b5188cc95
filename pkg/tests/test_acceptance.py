"""Acceptance suite: one test per criterion, each prints a single pass/fail line."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from spshds.certificates import CheckConfig, evaluate_theorem
from spshds.certificates.bundle import compose_foster, composite_flow_margin, compute_thresholds
from spshds.certificates.checks import GridSpec, expected_sup, run_check
from spshds.cli import main
from spshds.config import load_config
from spshds.executor import ExecConfig, solve, solve_ensemble
from spshds.flow import FlowConfig, integrate_flow
from spshds.montecarlo import (
    RecurrenceConfig,
    binomial_lower_bound,
    coverage_fraction,
    estimate_recurrence,
    estimate_stability_in_probability,
)

from conftest import rk4_reference, tracker_field

GRID_101 = GridSpec.box(-3.0, 3.0, 101, 2)


@pytest.fixture()
def verdict(capsys):
    start = time.perf_counter()

    def emit(number: int, ok: bool, detail: str, budget: float):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.2f}s < {budget:g}s)")
        assert ok, detail

    return emit


def test_01_threshold_formulas(verdict):
    rng = np.random.default_rng(101)
    ok = compute_thresholds(1, 1, 1, 1, 1) == (0.5, 0.5)
    for _ in range(100):
        kx, kz, k1, k2, k3 = rng.uniform(0.05, 10.0, 5)
        f = rng.uniform(1.01, 3.0)
        e, th = compute_thresholds(kx, kz, k1, k2, k3)
        ok &= 0 < th < 1
        ok &= compute_thresholds(kx, kz, k1, k2 * f, k3)[0] < e
        ok &= compute_thresholds(kx, kz, k1 * f, k2, k3)[0] < e
        ok &= compute_thresholds(kx, kz, k1, k2, k3 * f)[0] < e
        ok &= compute_thresholds(kx * f, kz, k1, k2, k3)[0] > e
        ok &= compute_thresholds(kx, kz * f, k1, k2, k3)[0] > e
    verdict(1, ok, "thresholds (0.5, 0.5) and 100 monotonicity tuples", 1.0)


def test_02_margin_matches_threshold(verdict):
    rng = np.random.default_rng(202)
    agree = 0
    for _ in range(100):
        k, k1, k2, k3 = rng.uniform(0.05, 10.0, 4)
        e_star, th = compute_thresholds(k, k, k1, k2, k3)
        eps = e_star * rng.uniform(0.05, 2.0)
        if abs(eps - e_star) <= 1e-10:
            eps = e_star * 0.5
        below = composite_flow_margin(k, k, k1, k2, k3, th, e_star * (1 - 1e-10))[1]
        above = composite_flow_margin(k, k, k1, k2, k3, th, e_star * (1 + 1e-10))[1]
        agree += composite_flow_margin(k, k, k1, k2, k3, th, eps)[1] == (eps < e_star) and below and not above
    verdict(2, agree == 100, f"pd_flag == (eps < eps_star) on {agree}/100 tuples incl. boundary", 1.0)


def test_03_tracker_certificate_suite(verdict, tracker):
    sys, cert = tracker.system, tracker.certificate
    worst = max(run_check(a, sys, cert, GRID_101).max_violation for a in ("A2a", "A2b", "A4a", "A4b", "A6a", "A6b"))
    t1b = run_check("T1b", sys, cert, GRID_101)
    cfg = CheckConfig(GRID_101)
    cache: dict = {}
    good = evaluate_theorem(sys, cert, 0.1, "T1", cfg, cache)
    bad = evaluate_theorem(sys, cert, 0.6, "T1", cfg, cache)
    failing = [e["name"] for e in bad.to_dict()["entries"] if e["status"] != "pass"]
    ok = (worst <= 1e-9 and t1b.details["min_margin"] > 0 and t1b.details["expectation"] == "exact_enumeration"
          and good.passed and failing == ["epsilon_in_(0,eps_star)"])
    verdict(3, ok, f"max violation {worst:.2e}, T1b min margin {t1b.details['min_margin']:.4f}, "
                   f"T1@0.1 {good.verdict}, T1@0.6 fails {failing}", 10.0)


def test_04_tampered_certificate(verdict, tracker):
    rep = run_check("A2b", tracker.system, tracker.certificate.with_constants(k_z=1.1), GRID_101)
    ok = abs(rep.max_violation - 3.6) <= 1e-9 and rep.witness in ([-3.0, 3.0], [3.0, -3.0])
    verdict(4, ok, f"A2b violation {rep.max_violation:.12f} at {rep.witness}", 10.0)


def test_05_integrator_order(verdict, tracker):
    T, y0 = 1.0, [0.5, 0.5]
    errors = []
    for h in (1e-2, 5e-3, 2.5e-3):
        seg = integrate_flow(tracker.system, y0, 1.0, FlowConfig(h_base=h, T_max=T))
        assert seg.terminal_reason == "reached_T_max" and len(seg.times) == round(T / h) + 1
        ref = rk4_reference(tracker_field(1.0), y0, T, h / 100)
        errors.append(float(np.max(np.abs(seg.final_state - ref))))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    ok = min(ratios) >= 2**3.5
    verdict(5, ok, f"errors {[f'{e:.2e}' for e in errors]}, ratios {[f'{r:.2f}' for r in ratios]}", 30.0)


def test_06_executor_determinism(verdict, noisy, tracker):
    cfg = ExecConfig(FlowConfig(h_base=0.05), T_total=8.0)
    y0s = [np.array([x, -x]) for x in np.linspace(-4, 4, 16)]
    prints = [[r.fingerprint() for r in solve_ensemble(noisy.system, y0s, 0.1, cfg, seed=11, workers=w)]
              for w in (1, 2, 8)]
    same = prints[0] == prints[1] == prints[2]
    seeds = np.random.default_rng(606).integers(0, 2**31, 100)
    replays = 0
    for seed in seeds:
        full = solve(noisy.system, [2.0, -1.0], 0.1, cfg, seed=int(seed))
        k = max(full.n_jumps - 1, 0)
        cut = solve(noisy.system, [2.0, -1.0], 0.1, ExecConfig(cfg.flow, J_max=k, T_total=8.0), seed=int(seed))
        replays += bool(np.array_equal(cut.inputs, full.inputs[:k]))
    verdict(6, same and replays == 100, f"workers 1/2/8 identical: {same}; replayed prefixes {replays}/100", 30.0)


def _uniform_reset():
    return load_config({
        "system": {"n1": 1, "n2": 1, "flow_x": [0.0], "flow_z": [0.0], "qss": ["x1"], "jump_set": "all",
                   "jump": [{"+": [{"*": [0.5, "x1"]}, "v1"]}, "z1"],
                   "jump_input": {"uniform_box": {"low": [-1.0], "high": [1.0]}}},
        "certificate": {"V": {"*": [0.5, {"^": ["x1", 2]}]}, "W": {"*": [0.5, {"^": [{"-": ["z1", "x1"]}, 2]}]},
                        "rho_x": {"expr": 0.0, "class": "continuous"},
                        "constants": {"c_x": 1.0, "mu_J": 0.0}},
    })


def test_07_jump_expectation_oracle(verdict, tracker):
    sys = tracker.system
    dist = sys.jump_input
    E = compose_foster(tracker.certificate, 0.5)
    Y = np.random.default_rng(707).uniform(-3, 3, size=(200, 2))
    got, _ = expected_sup(E, lambda P, V: sys.G.batch(P[:, :1], P[:, 1:], V), Y, dist, 1000, 0)
    exact = 0
    for y, g in zip(Y, got):
        total = 0.0
        for v, p in zip(dist.values, dist.probs):
            G = sys.G.batch(y[None, :1], y[None, 1:], v[None])[0]
            total = total + p * np.max(E(G[~np.isnan(G[:, 0])]))
        exact += g == total
    loaded = _uniform_reset()
    truth = 0.125 * 1.44 + 1.0 / 6.0 - 0.5 * 1.44
    hits = 0
    for seed in range(100):
        rep = run_check("A5", loaded.system, loaded.certificate, None, n_mc=2000, seed=seed, points=np.array([[1.2]]))
        hits += abs(rep.max_violation - truth) <= 3 * rep.mc_std
    verdict(7, exact == 200 and hits >= 99, f"bit-equal enumeration {exact}/200; within 3 mc_std {hits}/100", 30.0)


def test_08_empirical_ugasp(verdict, tracker):
    est = estimate_stability_in_probability(tracker.system, tracker.certificate, 0.1, 0.25, 0.5, 20.0, 500, seed=0,
                                            exec_config=ExecConfig.from_dict(tracker.loaded.execution))
    ok = est.point_estimate == 1.0 and est.lower_bound >= 0.994
    verdict(8, ok, f"success {est.n_success}/{est.n_trials}, lower bound {est.lower_bound:.5f}", 60.0)


def test_09_empirical_ugr(verdict, noisy):
    rc = RecurrenceConfig(noisy.certificate.O, 0.1, 5.0, 10.0, 1000)
    est = estimate_recurrence(noisy.system, rc, 0.05, ExecConfig.from_dict(noisy.loaded.execution), seed=0)
    blow = est.counts.get("finite_escape_candidates", 0)
    ok = est.lower_bound >= 0.95 and blow == 0
    verdict(9, ok, f"success {est.n_success}/{est.n_trials}, lower bound {est.lower_bound:.5f}, blow-ups {blow}", 120.0)


def test_10_binomial_bound(verdict):
    closed = max(abs(binomial_lower_bound(n, n, 0.95) - 0.05 ** (1 / n)) for n in (1, 10, 100, 1000))
    fracs = [coverage_fraction(p, 50, 1000, 0.95, seed=10) for p in (0.2, 0.6, 0.95)]
    floor = 0.95 - 3 * math.sqrt(0.95 * 0.05 / 1000)
    ok = closed <= 1e-10 and min(fracs) >= floor
    verdict(10, ok, f"closed-form error {closed:.1e}, coverage {[round(f, 3) for f in fracs]} >= {floor:.3f}", 60.0)


def test_11_cli_round_trip(verdict, tmp_path):
    assert main(["examples", "--out", str(tmp_path / "ex")]) == 0
    cfg = str(tmp_path / "ex" / "linear-tracker.json")
    codes = [main(["verify", "--config", cfg, "--theorem", "T1", "--epsilon", "0.1", "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    verdict(11, codes == [0, 0] and a == b, f"verify exit codes {codes}, reports identical: {a == b}", 10.0)
