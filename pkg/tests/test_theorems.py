from __future__ import annotations

import pytest

from spshds.certificates.checks import GridSpec
from spshds.certificates.theorems import CheckConfig, evaluate_theorem, missing_fields
from spshds.config import load_config
from spshds.errors import ConfigurationError
from spshds.executor import ExecConfig

FAST = CheckConfig(GridSpec.box(-3.0, 3.0, 41, 2), level_set={"n_per_level": 3, "duration": 2.0})


def _status(chk):
    return {e["name"]: e["status"] for e in chk.entries}


def test_tracker_t1_pass_and_epsilon_failure(tracker):
    cache = {}
    ok = evaluate_theorem(tracker.system, tracker.certificate, 0.1, "T1", FAST, cache)
    assert ok.passed and ok.diagnostics["eps_star"] == 0.5 and ok.diagnostics["thresholds_agree"]
    bad = evaluate_theorem(tracker.system, tracker.certificate, 0.6, "T1", FAST, cache)
    assert bad.failing() == ["epsilon_in_(0,eps_star)"]
    assert any("full two-time-scale system" in n for n in ok.notes)


def test_epsilon_at_threshold_fails_strictly(tracker):
    chk = evaluate_theorem(tracker.system, tracker.certificate, 0.5, "T1", FAST)
    assert chk.failing() == ["epsilon_in_(0,eps_star)"]


def test_t1_rejects_psd_phi(weak):
    chk = evaluate_theorem(weak.system, weak.certificate, 0.1, "T1", FAST)
    assert "field_rho_hat" in chk.failing()


def test_weak_decrease_t2(weak):
    chk = evaluate_theorem(weak.system, weak.certificate, 0.1, "T2", FAST, exec_config=ExecConfig())
    assert chk.passed, chk.failing()
    opt = next(e for e in chk.entries if e["name"] == "jump_condition_option")
    assert opt["options"]["option_1"]["status"] == "pass"


def test_t2_relaxation_is_strict(weak):
    cert = weak.certificate.with_constants(k_4=0.4)  # k3 k4 / k1 = 0.4 = c_x
    chk = evaluate_theorem(weak.system, cert, 0.1, "T2", FAST)
    assert "jump_condition_option" in chk.failing()


def test_noisy_reset_t3_accepts_ginf(noisy):
    chk = evaluate_theorem(noisy.system, noisy.certificate, 0.05, "T3", FAST)
    assert chk.passed, chk.failing()
    st = _status(chk)
    assert st["alpha4_Ginf"] == "pass" and "alpha4_Kinf" not in st
    t1 = evaluate_theorem(noisy.system, noisy.certificate, 0.05, "T1", FAST)
    assert not t1.passed


def test_noisy_reset_t4(noisy):
    cfg = CheckConfig(FAST.grid, level_set=dict(noisy.loaded.verification["level_set"], n_per_level=3))
    chk = evaluate_theorem(noisy.system, noisy.certificate, 0.05, "T4", cfg,
                           exec_config=ExecConfig.from_dict(noisy.loaded.execution))
    assert chk.passed, chk.failing()


def test_t4_level_inside_target_is_not_checked(noisy):
    cfg = CheckConfig(FAST.grid, level_set={"c_grid": [0.05], "n_per_level": 2})
    chk = evaluate_theorem(noisy.system, noisy.certificate, 0.05, "T4", cfg)
    entry = next(e for e in chk.entries if e["name"] == "level_set_nonstationarity")
    assert entry["status"] == "not_checked" and not chk.passed


def test_t3_needs_large_enough_inflation(noisy):
    cfg = noisy.config
    cfg["certificate"]["o_tilde_radius"] = 2.0
    cert = load_config(cfg).certificate
    chk = evaluate_theorem(noisy.system, cert, 0.05, "T3", FAST)
    assert chk.failing() == ["T3b"]


def test_missing_fields_are_not_checked(tracker):
    cfg = tracker.config
    del cfg["certificate"]["W"]
    cert = load_config(cfg).certificate
    assert missing_fields(cert, "T1") == ["W"]
    chk = evaluate_theorem(tracker.system, cert, 0.1, "T1", FAST)
    assert not chk.passed and chk.entries[0]["status"] == "not_checked"
    with pytest.raises(ConfigurationError):
        missing_fields(cert, "T9")


def test_checklist_serializes(tracker):
    import json

    d = evaluate_theorem(tracker.system, tracker.certificate, 0.1, "T1", FAST).to_dict()
    assert json.loads(json.dumps(d))["verdict"] == "pass"
