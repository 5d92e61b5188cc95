"""Time the flow kernel under numba and under the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by SPSHDS_NO_NUMBA.

    python3 benchmarks/bench_kernels.py [--trials 10]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from spshds import _accel
from spshds.executor import ExecConfig, solve
from spshds.flow import FlowConfig
from spshds.library import make_example

trials = int(sys.argv[1])
ex = make_example("linear-tracker")
cfg = ExecConfig(FlowConfig(h_base=0.01), T_total=20.0)
solve(ex.system, [0.5, 0.5], 0.1, cfg, seed=0)  # warm-up (jit compile)
t0 = time.perf_counter()
prints = [solve(ex.system, [0.9, -0.9], 0.1, cfg, seed=0, trial=k).fingerprint() for k in range(trials)]
elapsed = time.perf_counter() - t0
print(json.dumps({"backend": _accel.backend_name(), "seconds": elapsed, "prints": prints}))
"""


def run(trials: int, no_numba: bool) -> dict:
    env = dict(os.environ)
    env.pop("SPSHDS_NO_NUMBA", None)
    if no_numba:
        env["SPSHDS_NO_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(trials)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10)
    args = ap.parse_args()
    fast, slow = run(args.trials, False), run(args.trials, True)
    for r in (fast, slow):
        print(f"{r['backend']:>8}: {r['seconds']:.3f} s for {args.trials} solutions "
              f"({1e3 * r['seconds'] / args.trials:.2f} ms each)")
    print(f"speed-up {slow['seconds'] / fast['seconds']:.1f}x, identical results: {fast['prints'] == slow['prints']}")


if __name__ == "__main__":
    main()
