"""Random hybrid solutions: flows interleaved with stochastic jumps."""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import ArcSegment, HybridArc, HybridTime, JumpPoint, SystemDefinition
from .errors import AssumptionViolation, ConfigurationError, NoSolutionError, PreconditionError
from .flow import CHUNK_STEPS, FlowConfig, flow_chunks, parse_policy
from .streams import RandomStream, TrialStreams, trial_streams

COMPLETE = "complete_horizon"
STOPPED = "stopped_outside_C_union_D"
BLOW_UP = "blow_up"
JUMP_BUDGET = "jump_budget_exhausted"


@dataclass(frozen=True)
class ExecConfig:
    flow: FlowConfig = field(default_factory=FlowConfig)
    J_max: int = 10_000
    T_total: float = 10.0
    overlap_policy: str = "prefer_jump"
    jump_selection_policy: str | int = "first"

    def __post_init__(self):
        if self.J_max < 0 or not self.T_total > 0:
            raise ConfigurationError("J_max must be nonnegative and T_total positive")
        overlap_probability(self.overlap_policy)
        parse_policy(self.jump_selection_policy)

    @classmethod
    def from_dict(cls, d: dict) -> "ExecConfig":
        d = dict(d)
        unknown = set(d) - {"flow", "J_max", "T_total", "overlap_policy", "jump_selection_policy"}
        if unknown:
            raise ConfigurationError(f"unknown execution keys: {sorted(unknown)}")
        flow = FlowConfig.from_dict(d.pop("flow", {}))
        return cls(flow=flow, **d)


def overlap_probability(policy: str) -> float:
    """Jump probability in C ∩ D encoded by an overlap policy."""
    if policy == "prefer_jump":
        return 1.0
    if policy == "prefer_flow":
        return 0.0
    if isinstance(policy, str) and policy.startswith("bernoulli"):
        try:
            p = float(policy[policy.index("(") + 1: policy.rindex(")")])
        except ValueError as exc:
            raise ConfigurationError(f"malformed overlap policy {policy!r}; use 'bernoulli(p)'") from exc
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError("bernoulli probability must lie in [0, 1]")
        return p
    raise ConfigurationError(f"unknown overlap policy {policy!r}")


def sample_jump_input(dist, stream) -> np.ndarray:
    return dist.sample(stream)


def resolve_overlap(y, policy: str, stream=None) -> str:
    p = overlap_probability(policy)
    if policy.startswith("bernoulli"):
        if stream is None:
            raise ConfigurationError("bernoulli overlap policy needs a stream")
        return "jump" if stream.uniform() < p else "flow"
    return "jump" if p == 1.0 else "flow"


def apply_jump(sys: SystemDefinition, y, v, policy="first", stream=None, tol: float = 1e-9) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not sys.D.member(y[None], tol)[0]:
        raise PreconditionError("jump requested from a state outside the jump set")
    G = sys.G.batch(y[None, : sys.n1], y[None, sys.n1:], v[None])[0]
    rows = G[~np.any(np.isnan(G), axis=1)]
    if rows.shape[0] == 0:
        raise AssumptionViolation("jump map empty on jump set", witness=y)
    kind, k = parse_policy(policy)
    if kind == "random":
        if stream is None:
            raise ConfigurationError("random jump selection needs a stream")
        k = min(int(stream.uniform() * rows.shape[0]), rows.shape[0] - 1)
    elif k >= rows.shape[0]:
        raise ConfigurationError(f"jump selection index {k} out of range")
    return rows[k].copy()


@dataclass(eq=False)
class RandomSolutionRecord:
    arc: HybridArc
    inputs: np.ndarray
    seed: int
    trial: int
    stop_reason: str
    flags: dict = field(default_factory=dict)
    epsilon: float = float("nan")

    @property
    def n_jumps(self) -> int:
        return self.arc.n_jumps

    def fingerprint(self) -> str:
        """Digest of every stored float, used to compare records bit-for-bit."""
        h = hashlib.sha256()
        for seg in self.arc.segments:
            h.update(np.int64(seg.j).tobytes())
            h.update(np.ascontiguousarray(seg.times).tobytes())
            h.update(np.ascontiguousarray(seg.states).tobytes())
        for jp in self.arc.jump_points:
            h.update(jp.pre.tobytes())
            h.update(jp.post.tobytes())
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        h.update(self.stop_reason.encode())
        return h.hexdigest()

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "trial": self.trial,
            "epsilon": self.epsilon,
            "stop_reason": self.stop_reason,
            "n_jumps": self.n_jumps,
            "inputs": self.inputs.tolist(),
            "flags": self.flags,
            "fingerprint": self.fingerprint(),
        }

    def write(self, csv_path, json_path=None, n1: int | None = None) -> None:
        t, j, y = self.arc.nodes()
        n = y.shape[1]
        n1 = n1 if n1 is not None else self.flags.get("n1", n // 2)
        header = ["t", "j"] + [f"x{i + 1}" for i in range(n1)] + [f"z{i + 1}" for i in range(n - n1)]
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(t.size):
                w.writerow([repr(float(t[k])), int(j[k])] + [repr(float(c)) for c in y[k]])
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")


class _SegmentBuilder:
    def __init__(self, j, t, y):
        self.j = j
        self.times = [np.array([t])]
        self.states = [np.asarray(y, dtype=float)[None]]

    def extend(self, times, states):
        if times.size > 1:
            self.times.append(times[1:])
            self.states.append(states[1:])

    def close(self) -> ArcSegment:
        return ArcSegment(self.j, np.concatenate(self.times), np.concatenate(self.states))

    @property
    def last(self):
        return float(self.times[-1][-1]), self.states[-1][-1]


def _jump_step(sys, y, streams: TrialStreams, cfg: ExecConfig):
    v = sample_jump_input(sys.jump_input, streams.inputs)
    post = apply_jump(sys, y, v, cfg.jump_selection_policy, streams.select, cfg.flow.tol_set)
    return v, post


def solve(sys: SystemDefinition, y0, eps: float, cfg: ExecConfig, seed: int = 0, trial: int = 0,
          streams: TrialStreams | None = None) -> RandomSolutionRecord:
    """One maximal random solution up to the hybrid horizon ``t + j <= T_total``."""
    if not eps > 0:
        raise ConfigurationError("epsilon must be positive")
    y = np.asarray(y0, dtype=float).copy()
    if y.shape != (sys.n,):
        raise ConfigurationError(f"initial state must have length {sys.n}")
    tol = cfg.flow.tol_set
    in_c = lambda s: bool(sys.C.member(s[None], tol)[0])
    in_d = lambda s: bool(sys.D.member(s[None], tol)[0])
    if not (in_c(y) or in_d(y)):
        raise NoSolutionError("no solution from initial condition")
    if streams is None:
        streams = trial_streams(seed, trial)
    flow_stream = streams.flow if parse_policy(cfg.flow.selection_policy)[0] == "random" else None
    p_jump = overlap_probability(cfg.overlap_policy)
    bernoulli = cfg.overlap_policy.startswith("bernoulli")

    segments: list[ArcSegment] = []
    jumps: list[JumpPoint] = []
    inputs: list[np.ndarray] = []
    flags: dict = {"n1": sys.n1}
    seg = _SegmentBuilder(0, 0.0, y)
    t, j = 0.0, 0
    reason = None

    def jump():
        nonlocal y, j, seg
        if j >= cfg.J_max:
            return JUMP_BUDGET
        v, post = _jump_step(sys, y, streams, cfg)
        inputs.append(v)
        jumps.append(JumpPoint(HybridTime(t, j), y.copy(), post.copy()))
        segments.append(seg.close())
        j += 1
        y = post
        seg = _SegmentBuilder(j, t, y)
        if not np.all(np.isfinite(y)) or np.sqrt(np.sum(y * y)) > 1e9:
            return BLOW_UP
        return None

    while reason is None:
        if t + j >= cfg.T_total * (1.0 - 1e-15):
            reason = COMPLETE
            break
        cin, din = in_c(y), in_d(y)
        if din and cin:
            action = resolve_overlap(y, cfg.overlap_policy, streams.overlap)
        elif din:
            action = "jump"
        elif cin:
            action = "flow"
        else:
            reason = STOPPED
            flags["boundary_stop"] = True
            break
        if action == "jump":
            reason = jump()
            continue
        # a bernoulli flow decision inside D only covers one step; the next node draws again
        single = bernoulli and din
        last = kernels.REASON_T_MAX
        for res in flow_chunks(sys, y, t, eps, cfg.T_total - j, cfg.flow, flow_stream,
                               stop_on_d=p_jump > 0.0, start_in_d=din,
                               max_steps=1 if single else CHUNK_STEPS):
            seg.extend(res.times, res.states)
            last = res.reason
            if single:
                break
        t, y = seg.last
        y = y.copy()
        if last == kernels.REASON_BLOW_UP:
            reason = BLOW_UP
        elif last == kernels.REASON_T_MAX:
            reason = COMPLETE
        elif last == kernels.REASON_LEFT_C:
            if in_d(y):
                reason = jump()
            else:
                reason = STOPPED
                flags["left_flow_set"] = True
    segments.append(seg.close())
    m = sys.jump_input.dim
    inp = np.array(inputs, dtype=float).reshape(len(inputs), m)
    rec = RandomSolutionRecord(HybridArc(segments, jumps), inp, int(seed), int(trial), reason, flags, float(eps))
    return rec


def solve_ensemble(sys: SystemDefinition, initial_states: Sequence, eps: float, cfg: ExecConfig,
                   seed: int = 0, workers: int = 1, trial_offset: int = 0) -> list[RandomSolutionRecord]:
    """Solve one trial per initial state; results are ordered by trial index."""
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    Y = [np.asarray(y, dtype=float) for y in initial_states]

    def task(k):
        return solve(sys, Y[k], eps, cfg, seed=seed, trial=trial_offset + k)

    if workers == 1 or len(Y) <= 1:
        return [task(k) for k in range(len(Y))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(Y))))


def map_trials(fn: Callable[[int], object], n: int, workers: int = 1) -> list:
    if workers <= 1 or n <= 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))
