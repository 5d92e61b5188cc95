"""Command-line entry point.

Exit codes: 0 success, 1 verification failed, 2 bad config or arguments,
3 initial state outside C ∪ D, 4 certificate fields missing.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from .certificates.checks import GridSpec
from .certificates.theorems import THEOREMS, CheckConfig, evaluate_theorem, missing_fields
from .config import load_config
from .errors import ConfigurationError, NoSolutionError, PreconditionError, SpshdsError
from .executor import ExecConfig, solve
from .library import EXAMPLE_NAMES, example_config
from .montecarlo import RecurrenceConfig, estimate_recurrence, sweep_epsilon
from .regions import parse_region

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN, EXIT_MISSING = 0, 1, 2, 3, 4


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from exc


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TOOLKIT_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigurationError(f"TOOLKIT_SEED must be an integer, got {env!r}") from exc


def _write_manifest(args, out: Path, seed: int, params: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dump_json({
        "command": args.command,
        "config": None if getattr(args, "config", None) is None else str(args.config),
        "parameters": params,
        "seed": seed,
        "output_dir": str(out),
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }, out / "manifest.json")


def _exec_config(loaded) -> ExecConfig:
    return ExecConfig.from_dict(loaded.execution)


def _check_config(loaded, args, n: int) -> tuple[CheckConfig, dict]:
    ver = dict(loaded.verification)
    extra = {k: ver.pop(k) for k in ("theorem", "epsilon") if k in ver}
    cfg = CheckConfig.from_dict(ver, n)
    if getattr(args, "grid", None):
        vals = _floats(args.grid)
        if len(vals) != 3 or vals[2] != int(vals[2]):
            raise ConfigurationError("--grid expects low,high,n")
        cfg.grid = GridSpec.box(vals[0], vals[1], int(vals[2]), n)
    if getattr(args, "tol", None) is not None:
        cfg.tol = args.tol
    return cfg, extra


def cmd_examples(args) -> int:
    names = [args.name] if args.name else list(EXAMPLE_NAMES)
    if args.out is None:
        for name in names:
            example_config(name)
            print(name)
        return EXIT_OK
    out = Path(args.out)
    _write_manifest(args, out, _seed(args), {"names": names})
    for name in names:
        dump_json(example_config(name), out / f"{name}.json")
        print(out / f"{name}.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _seed(args)
    out = Path(args.out)
    loaded = load_config(args.config)
    sys = loaded.system
    y0 = _floats(args.y0)
    if len(y0) != sys.n:
        raise ConfigurationError(f"--y0 needs {sys.n} values")
    if args.trials < 1:
        raise ConfigurationError("--trials must be at least 1")
    cfg = _exec_config(loaded)
    _write_manifest(args, out, seed, {"y0": y0, "epsilon": args.epsilon, "trials": args.trials})
    for k in range(args.trials):
        rec = solve(sys, np.array(y0), args.epsilon, cfg, seed=seed, trial=k)
        stem = "trajectory" if args.trials == 1 else f"trajectory_{k}"
        rec.write(out / f"{stem}.csv", out / f"{stem}.json", n1=sys.n1)
        print(f"trial {k}: {rec.stop_reason}, {rec.n_jumps} jumps, final state {rec.arc.final_state.tolist()}")
    return EXIT_OK


def _theorem(args, extra) -> str:
    th = args.theorem or extra.get("theorem") or "T1"
    if th not in THEOREMS:
        raise ConfigurationError(f"--theorem must be one of {list(THEOREMS)}")
    return th


def cmd_verify(args) -> int:
    seed = _seed(args)
    out = Path(args.out)
    loaded = load_config(args.config)
    sys, cert = loaded.system, loaded.certificate
    check, extra = _check_config(loaded, args, sys.n)
    if args.seed is not None or "TOOLKIT_SEED" in os.environ:
        check.seed = seed
    theorem = _theorem(args, extra)
    eps = args.epsilon if args.epsilon is not None else extra.get("epsilon")
    if eps is None:
        raise ConfigurationError("--epsilon is required")
    _write_manifest(args, out, check.seed, {"theorem": theorem, "epsilon": eps, "grid": check.grid.to_dict(),
                                            "tol": check.tol})
    missing = missing_fields(cert, theorem)
    if missing:
        print(f"certificate is missing fields required by {theorem}: {', '.join(missing)}", file=_sys.stderr)
        return EXIT_MISSING
    chk = evaluate_theorem(sys, cert, float(eps), theorem, check, exec_config=_exec_config(loaded))
    dump_json(chk.to_dict(), out / "report.json")
    width = max(len(e["name"]) for e in chk.entries)
    for e in chk.entries:
        print(f"{e['name']:<{width}}  {e['status']:<11}  {e['detail']}")
    print(f"{theorem} at epsilon={eps}: {chk.verdict.upper()}")
    return EXIT_OK if chk.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    seed = _seed(args)
    out = Path(args.out)
    loaded = load_config(args.config)
    sys, cert = loaded.system, loaded.certificate
    check, extra = _check_config(loaded, args, sys.n)
    theorem = _theorem(args, extra)
    grid = _floats(args.epsilon)
    if args.trials < 1:
        raise ConfigurationError("--trials must be at least 1")
    missing = missing_fields(cert, theorem)
    stability = {"delta": args.delta, "eps_ball": args.eps_ball, "T": args.T, "N": args.trials}
    _write_manifest(args, out, seed, {"theorem": theorem, "epsilon_grid": grid, **stability})
    if missing:
        print(f"certificate is missing fields required by {theorem}: {', '.join(missing)}", file=_sys.stderr)
        return EXIT_MISSING
    rows = sweep_epsilon(sys, cert, grid, stability, seed, theorem, check, _exec_config(loaded), args.workers)
    table = [{"epsilon": r["epsilon"], "verdict": r["verdict"], "failing": r["failing"],
              **r["estimate"].summary()} for r in rows]
    dump_json({"rows": table}, out / "sweep.json")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "verdict", "n_trials", "n_success", "point_estimate", "lower_bound"])
        for r in table:
            w.writerow([repr(r["epsilon"]), r["verdict"], r["n_trials"], r["n_success"],
                        repr(r["point_estimate"]), repr(r["lower_bound"])])
    print(f"{'epsilon':>10}  {'verdict':<7}  {'success':>9}  {'lower':>8}")
    for r in table:
        print(f"{r['epsilon']:>10.4g}  {r['verdict']:<7}  {r['n_success']:>4}/{r['n_trials']:<4}  {r['lower_bound']:>8.5f}")
    return EXIT_OK


def cmd_recur(args) -> int:
    seed = _seed(args)
    out = Path(args.out)
    loaded = load_config(args.config)
    sys, cert = loaded.system, loaded.certificate
    if args.trials < 1:
        raise ConfigurationError("--trials must be at least 1")
    if args.O is not None:
        O = parse_region(json.loads(args.O), sys.n1)
    elif cert is not None and cert.O is not None:
        O = cert.O
    else:
        raise ConfigurationError("recurrence needs a target region: certificate 'O' or --O")
    rc = RecurrenceConfig(O, args.delta_O, args.R, args.tau, args.trials)
    _write_manifest(args, out, seed, {"epsilon": args.epsilon, "R": args.R, "tau": args.tau,
                                      "delta_O": args.delta_O, "trials": args.trials, "O": O.to_config()})
    est = estimate_recurrence(sys, rc, args.epsilon, _exec_config(loaded), seed, args.workers)
    est.write(out / "trials.csv", out / "summary.json")
    print(f"success {est.n_success}/{est.n_trials}, point estimate {est.point_estimate:.5f}, "
          f"lower bound {est.lower_bound:.5f} at confidence {est.confidence}")
    print(f"blow-up records: {est.counts.get('finite_escape_candidates', 0)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spshds", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default TOOLKIT_SEED or 0)")
        sp.add_argument("--out", default=None if not config else "spshds-out", help="output directory")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("examples", help="list or emit built-in example configs")
    common(sp, config=False)
    sp.add_argument("--name", choices=EXAMPLE_NAMES)

    sp = sub.add_parser("simulate", help="solve one or more random solutions")
    common(sp)
    sp.add_argument("--y0", required=True, help="comma-separated initial state")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--trials", type=int, default=1)

    sp = sub.add_parser("verify", help="screen the conditions of one theorem")
    common(sp)
    sp.add_argument("--theorem", default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--grid", default=None, help="low,high,n applied to every coordinate")
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("sweep", help="checklist verdict and stability estimate over epsilon values")
    common(sp)
    sp.add_argument("--epsilon", required=True, help="comma-separated epsilon grid")
    sp.add_argument("--theorem", default=None)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--delta", type=float, default=0.25)
    sp.add_argument("--eps-ball", dest="eps_ball", type=float, default=0.5)
    sp.add_argument("--T", type=float, default=20.0)
    sp.add_argument("--grid", default=None)
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("recur", help="estimate recurrence to the inflated target set")
    common(sp)
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--R", type=float, default=5.0)
    sp.add_argument("--tau", type=float, default=10.0)
    sp.add_argument("--delta-O", dest="delta_O", type=float, default=0.1)
    sp.add_argument("--O", default=None, help="JSON region for the slow target (default: certificate O)")
    return p


COMMANDS = {"examples": cmd_examples, "simulate": cmd_simulate, "verify": cmd_verify,
            "sweep": cmd_sweep, "recur": cmd_recur}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "workers", 1) < 1:
            raise ConfigurationError("--workers must be at least 1")
        return COMMANDS[args.command](args)
    except NoSolutionError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_DOMAIN
    except (ConfigurationError, PreconditionError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except SpshdsError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
