"""The numba kernels and the pure-numpy fallback must produce identical numbers."""

from __future__ import annotations

import json
import os
import subprocess
import sys

SCRIPT = r"""
import json
from spshds import _accel
from spshds.executor import ExecConfig, solve
from spshds.flow import FlowConfig
from spshds.library import make_example
ex = make_example("noisy-reset")
cfg = ExecConfig(FlowConfig(h_base=0.02), T_total=6.0)
prints = [solve(ex.system, [x, -x], 0.05, cfg, seed=3, trial=k).fingerprint()
          for k, x in enumerate([-4.0, -1.0, 0.3, 2.5])]
print(json.dumps({"numba": _accel.NUMBA_ENABLED, "prints": prints}))
"""


def _run(no_numba: bool) -> dict:
    env = dict(os.environ)
    env.pop("SPSHDS_NO_NUMBA", None)
    if no_numba:
        env["SPSHDS_NO_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_fallback_matches_compiled_kernels_bit_for_bit():
    fast, slow = _run(False), _run(True)
    assert fast["numba"] and not slow["numba"]
    assert fast["prints"] == slow["prints"]
