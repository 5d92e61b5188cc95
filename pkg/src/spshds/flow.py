"""Fixed-step RK4 integration of the epsilon-scaled flows with event handling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import SelectionBundle, SystemDefinition
from .errors import ConfigurationError, EventBracketError, PreconditionError

ENTERED_JUMP_SET = "entered_jump_set"
LEFT_FLOW_SET = "left_flow_set"
REACHED_T_MAX = "reached_T_max"
BLOW_UP = "blow_up"

_REASONS = {
    kernels.REASON_ENTERED_D: ENTERED_JUMP_SET,
    kernels.REASON_LEFT_C: LEFT_FLOW_SET,
    kernels.REASON_T_MAX: REACHED_T_MAX,
    kernels.REASON_BLOW_UP: BLOW_UP,
}

BLOW_UP_BOUND = 1e9
CHUNK_STEPS = 4096


@dataclass(frozen=True)
class FlowConfig:
    h_base: float = 0.01
    fast_substep_factor: int = 1
    tol_event: float = 1e-10
    T_max: float = 10.0
    selection_policy: str | int = "first"
    tol_set: float = 1e-9
    backend: str = "auto"

    def __post_init__(self):
        if not self.h_base > 0 or not self.tol_event > 0 or not self.T_max > 0:
            raise ConfigurationError("h_base, tol_event and T_max must be positive")
        if int(self.fast_substep_factor) != self.fast_substep_factor or self.fast_substep_factor < 1:
            raise ConfigurationError("fast_substep_factor must be a positive integer")
        if self.tol_set < 0:
            raise ConfigurationError("tol_set must be nonnegative")
        parse_policy(self.selection_policy)
        if self.backend not in ("auto", "kernel", "generic"):
            raise ConfigurationError(f"unknown backend {self.backend!r}")

    def step(self, eps: float) -> float:
        """Effective step: the base step, shrunk so the fast dynamics stay resolved."""
        return min(self.h_base, eps * self.h_base / self.fast_substep_factor)

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ConfigurationError(f"unknown flow keys: {sorted(unknown)}")
        return cls(**d)


def parse_policy(policy) -> tuple[str, int]:
    """Normalize a selection policy to ('first'|'index'|'random', k)."""
    if policy == "first":
        return "first", 0
    if policy in ("random", "random-per-step"):
        return "random", 0
    if isinstance(policy, bool):
        raise ConfigurationError(f"unknown selection policy {policy!r}")
    if isinstance(policy, int):
        if policy < 0:
            raise ConfigurationError("selection index must be nonnegative")
        return "index", policy
    if isinstance(policy, str) and policy.startswith("index"):
        try:
            k = int(policy.split(":", 1)[1])
        except (IndexError, ValueError) as exc:
            raise ConfigurationError(f"malformed index policy {policy!r}; use 'index:k'") from exc
        return parse_policy(k)
    raise ConfigurationError(f"unknown selection policy {policy!r}")


def select_flow_value(bundle: SelectionBundle, policy, stream=None) -> np.ndarray:
    kind, k = parse_policy(policy)
    if kind == "random":
        if stream is None:
            raise ConfigurationError("random selection needs a stream")
        u = stream.uniform()
        return bundle.values[min(int(u * len(bundle)), len(bundle) - 1)].copy()
    if k >= len(bundle):
        raise ConfigurationError(f"selection index {k} out of range for a bundle of {len(bundle)}")
    return bundle.values[k].copy()


@dataclass(eq=False)
class FlowSegment:
    times: np.ndarray
    states: np.ndarray
    terminal_reason: str
    uniforms_used: int = 0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


@dataclass(eq=False)
class _ChunkResult:
    times: np.ndarray
    states: np.ndarray
    reason: int
    n_uniforms: int


def _check_index(sys: SystemDefinition, policy) -> tuple[bool, int, int]:
    kind, k = parse_policy(policy)
    if kind == "random":
        return True, 0, 0
    comp = sys.compiled
    kx = min(k, comp.fx_s.shape[0] - 1) if comp is not None else k
    kz = min(k, comp.fz_s.shape[0] - 1) if comp is not None else k
    if comp is not None and k >= max(comp.fx_s.shape[0], comp.fz_s.shape[0]):
        raise ConfigurationError(f"selection index {k} out of range")
    return False, kx, kz


def _kernel_chunk(sys, y0, t0, eps, h, t_end, cfg: FlowConfig, stop_on_d, start_in_d,
                  random_sel, kx, kz, stream, max_steps) -> _ChunkResult:
    comp = sys.compiled
    n = sys.n
    u = stream.peek(2 * max_steps) if random_sel else np.zeros(1)
    out_t = np.empty(max_steps + 2)
    out_y = np.empty((max_steps + 2, n))
    n_out, reason, n_u = kernels.flow_kernel(
        comp.code, comp.args, comp.fx_s, comp.fx_e, comp.fz_s, comp.fz_e,
        comp.c_range[0], comp.c_range[1], comp.d_range[0], comp.d_range[1],
        sys.n1, sys.n2, np.ascontiguousarray(y0, dtype=np.float64), float(t0), float(eps),
        float(h), float(t_end), int(max_steps), float(cfg.tol_set), float(cfg.tol_event),
        bool(stop_on_d), bool(start_in_d), bool(random_sel), int(kx), int(kz), u,
        BLOW_UP_BOUND, int(comp.stack_size), out_t, out_y,
    )
    if random_sel:
        stream.advance(n_u)
    return _ChunkResult(out_t[:n_out].copy(), out_y[:n_out].copy(), int(reason), int(n_u))


def _field(sys: SystemDefinition, y: np.ndarray, eps: float, kx: int, kz: int) -> np.ndarray:
    x, z = y[None, : sys.n1], y[None, sys.n1:]
    Fx = sys.F_x.batch(x, z)[0]
    Fz = sys.F_z.batch(x, z)[0]
    fx, fz = Fx[min(kx, Fx.shape[0] - 1)], Fz[min(kz, Fz.shape[0] - 1)]
    if np.any(np.isnan(fx)) or np.any(np.isnan(fz)):
        fx = Fx[~np.any(np.isnan(Fx), axis=1)][0]
        fz = Fz[~np.any(np.isnan(Fz), axis=1)][0]
    return np.concatenate([fx, fz / eps])


def _rk4(sys, y, s, eps, kx, kz, k1=None):
    if k1 is None:
        k1 = _field(sys, y, eps, kx, kz)
    half = 0.5 * s
    k2 = _field(sys, y + half * k1, eps, kx, kz)
    k3 = _field(sys, y + half * k2, eps, kx, kz)
    k4 = _field(sys, y + s * k3, eps, kx, kz)
    return y + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _n_selections(sys, y) -> tuple[int, int]:
    x, z = y[None, : sys.n1], y[None, sys.n1:]
    Fx = sys.F_x.batch(x, z)[0]
    Fz = sys.F_z.batch(x, z)[0]
    return int(np.sum(~np.any(np.isnan(Fx), axis=1))), int(np.sum(~np.any(np.isnan(Fz), axis=1)))


def _generic_chunk(sys, y0, t0, eps, h, t_end, cfg: FlowConfig, stop_on_d, start_in_d,
                   random_sel, kx0, kz0, stream, max_steps) -> _ChunkResult:
    """Same algorithm as the compiled kernel, over arbitrary Python maps."""
    inD = lambda y: bool(sys.D.member(y[None])[0])
    inC = lambda y: bool(sys.C.member(y[None], cfg.tol_set)[0])
    y = np.array(y0, dtype=float)
    t = float(t0)
    ts, ys = [t], [y.copy()]
    n_u = 0
    if stop_on_d and not start_in_d and inD(y):
        return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_ENTERED_D, 0)
    first = True
    for _ in range(max_steps):
        rem = t_end - t
        if rem <= 1e-12 * max(1.0, abs(t_end)):
            return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_T_MAX, n_u)
        s = rem if rem <= h * (1.0 + 1e-9) else h
        if random_sel:
            nkx, nkz = _n_selections(sys, y)
            u = stream.uniforms(2)
            kx, kz = min(int(u[0] * nkx), nkx - 1), min(int(u[1] * nkz), nkz - 1)
            n_u += 2
        else:
            kx, kz = kx0, kz0
        k1 = _field(sys, y, eps, kx, kz)
        with np.errstate(all="ignore"):
            ynew = _rk4(sys, y, s, eps, kx, kz, k1)
        if not np.all(np.isfinite(ynew)) or np.sqrt(np.sum(ynew * ynew)) > BLOW_UP_BOUND:
            return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_BLOW_UP, n_u)
        if stop_on_d and inD(ynew):
            hit = s
            if not (start_in_d and first):
                hit = _bisect(lambda m: inD(_rk4(sys, y, m, eps, kx, kz, k1)), 0.0, s, cfg.tol_event, True)
            if hit != s:
                ynew = _rk4(sys, y, hit, eps, kx, kz, k1)
            ts.append(t + hit)
            ys.append(ynew)
            return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_ENTERED_D, n_u)
        if not inC(ynew):
            lo = _bisect(lambda m: not inC(_rk4(sys, y, m, eps, kx, kz, k1)), 0.0, s, cfg.tol_event, False)
            if lo > 0.0:
                ts.append(t + lo)
                ys.append(_rk4(sys, y, lo, eps, kx, kz, k1))
            return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_LEFT_C, n_u)
        t = t + s
        y = ynew
        ts.append(t)
        ys.append(y.copy())
        first = False
    return _ChunkResult(np.array(ts), np.array(ys), kernels.REASON_CHUNK, n_u)


def _bisect(hit, lo: float, hi: float, tol: float, return_hi: bool) -> float:
    """Shrink [lo, hi] around the first change of ``hit``; hit(hi) is assumed true."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if hit(mid):
            hi = mid
        else:
            lo = mid
    return hi if return_hi else lo


def use_kernel(sys: SystemDefinition, cfg: FlowConfig) -> bool:
    if cfg.backend == "generic" or sys.compiled is None:
        if cfg.backend == "kernel":
            raise ConfigurationError("kernel backend requires a compiled (config-defined) system")
        return False
    return True


def flow_chunks(sys, y0, t0, eps, t_end, cfg: FlowConfig, stream=None, stop_on_d=True,
                start_in_d=False, max_steps=CHUNK_STEPS):
    """Yield successive chunks of one flow until a terminal reason occurs."""
    random_sel, kx, kz = _check_index(sys, cfg.selection_policy)
    if random_sel and stream is None:
        raise ConfigurationError("random selection policy needs a stream")
    runner = _kernel_chunk if use_kernel(sys, cfg) else _generic_chunk
    h = cfg.step(eps)
    y, t = np.asarray(y0, dtype=float), float(t0)
    first = True
    while True:
        res = runner(sys, y, t, eps, h, t_end, cfg, stop_on_d, start_in_d and first,
                     random_sel, kx, kz, stream, max_steps)
        yield res
        if res.reason != kernels.REASON_CHUNK:
            return
        y, t = res.states[-1], float(res.times[-1])
        # a chunk that advanced leaves the start of D behind
        first = first and res.times.size == 1


def integrate_flow(sys: SystemDefinition, y0, eps: float, config: FlowConfig, stream=None,
                   stop_on_jump_set: bool = True, t0: float = 0.0) -> FlowSegment:
    if not eps > 0:
        raise ConfigurationError("epsilon must be positive")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (sys.n,):
        raise ConfigurationError(f"initial state must have length {sys.n}")
    if not sys.C.member(y0[None], config.tol_set)[0]:
        raise PreconditionError("flow started outside flow set")
    times, states, used = [], [], 0
    reason = kernels.REASON_T_MAX
    for k, res in enumerate(flow_chunks(sys, y0, t0, eps, t0 + config.T_max, config, stream, stop_on_jump_set)):
        times.append(res.times if k == 0 else res.times[1:])
        states.append(res.states if k == 0 else res.states[1:])
        used += res.n_uniforms
        reason = res.reason
    return FlowSegment(np.concatenate(times), np.concatenate(states), _REASONS[reason], used)


def localize_event(sys: SystemDefinition, y_start, s_max: float, eps: float, pred, tol_event: float,
                   selection=(0, 0)) -> tuple[float, np.ndarray]:
    """Bisect a single RK4 step of length ``s_max`` from ``y_start`` for the first entry into ``pred``.

    Returns ``(t*, y*)`` with ``y*`` a member of the target set; ``t*`` is
    within ``tol_event`` of the crossing time of the discrete step.
    """
    if not tol_event > 0 or not s_max > 0:
        raise ConfigurationError("tol_event and the bracket length must be positive")
    y_start = np.asarray(y_start, dtype=float)
    kx, kz = selection
    member = lambda y: bool(pred.member(y[None])[0])
    if member(y_start):
        return 0.0, y_start.copy()
    k1 = _field(sys, y_start, eps, kx, kz)
    y_end = _rk4(sys, y_start, s_max, eps, kx, kz, k1)
    if not member(y_end):
        raise EventBracketError("event bracket invalid")
    hit = _bisect(lambda m: member(_rk4(sys, y_start, m, eps, kx, kz, k1)), 0.0, s_max, tol_event, True)
    return hit, _rk4(sys, y_start, hit, eps, kx, kz, k1)
