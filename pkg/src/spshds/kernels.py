"""Hot loops: bytecode interpreter, RK4 stepping, event bisection.

Every function here is decorated with :func:`spshds._accel.njit`; with
``SPSHDS_NO_NUMBA=1`` they run unchanged as Python over numpy scalars.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit
from .expr import (
    OP_ABS,
    OP_ADD,
    OP_CONST,
    OP_DIV,
    OP_MAX,
    OP_MIN,
    OP_MUL,
    OP_NEG,
    OP_POWI,
    OP_SQRT,
    OP_SUB,
    OP_VAR,
)

REASON_CHUNK = 0
REASON_ENTERED_D = 1
REASON_LEFT_C = 2
REASON_T_MAX = 3
REASON_BLOW_UP = 4


@njit
def run_program(code, args, start, end, xs, stack):
    sp = 0
    for pc in range(start, end):
        op = code[pc]
        if op == OP_CONST:
            stack[sp] = args[pc]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = xs[int(args[pc])]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ABS:
            stack[sp - 1] = abs(stack[sp - 1])
        elif op == OP_MAX:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            stack[sp - 1] = a if a >= b else b
        elif op == OP_MIN:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            stack[sp - 1] = a if a <= b else b
        elif op == OP_POWI:
            k = int(args[pc])
            a = stack[sp - 1]
            if k == 0:
                r = 1.0
            else:
                r = a
                for _ in range(abs(k) - 1):
                    r = r * a
                if k < 0:
                    r = 1.0 / r
            stack[sp - 1] = r
        elif op == OP_SQRT:
            stack[sp - 1] = np.sqrt(stack[sp - 1])
    return stack[0]


@njit
def eval_field(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, stack, out):
    for i in range(n1):
        out[i] = run_program(code, args, fx_s[kx, i], fx_e[kx, i], y, stack)
    for i in range(n2):
        out[n1 + i] = run_program(code, args, fz_s[kz, i], fz_e[kz, i], y, stack) / eps


@njit
def rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, s, k1,
             stack, tmp, k2, k3, k4, out):
    n = n1 + n2
    half = 0.5 * s
    for i in range(n):
        tmp[i] = y[i] + half * k1[i]
    eval_field(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, tmp, stack, k2)
    for i in range(n):
        tmp[i] = y[i] + half * k2[i]
    eval_field(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, tmp, stack, k3)
    for i in range(n):
        tmp[i] = y[i] + s * k3[i]
    eval_field(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, tmp, stack, k4)
    sixth = s / 6.0
    for i in range(n):
        out[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit
def flow_kernel(code, args, fx_s, fx_e, fz_s, fz_e, c_s, c_e, d_s, d_e, n1, n2,
                y0, t0, eps, h, t_end, max_steps, tol_set, tol_event,
                stop_on_d, start_in_d, random_sel, kx0, kz0, u, blowup, stack_size,
                out_t, out_y):
    """Integrate one flow chunk; returns (n_nodes, reason, n_uniforms_used)."""
    n = n1 + n2
    stack = np.empty(stack_size)
    y = y0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    ym = np.empty(n)
    t = t0
    out_t[0] = t
    for i in range(n):
        out_y[0, i] = y[i]
    n_out = 1
    n_u = 0
    if stop_on_d and not start_in_d:
        if run_program(code, args, d_s, d_e, y, stack) <= 0.0:
            return n_out, REASON_ENTERED_D, n_u
    nkx = fx_s.shape[0]
    nkz = fz_s.shape[0]
    first = True
    steps = 0
    while steps < max_steps:
        rem = t_end - t
        if rem <= 1e-12 * max(1.0, abs(t_end)):
            return n_out, REASON_T_MAX, n_u
        s = h
        if rem <= h * (1.0 + 1e-9):
            s = rem
        if random_sel:
            kx = min(int(u[n_u] * nkx), nkx - 1)
            kz = min(int(u[n_u + 1] * nkz), nkz - 1)
            n_u += 2
        else:
            kx = kx0
            kz = kz0
        eval_field(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, stack, k1)
        rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, s, k1,
                 stack, tmp, k2, k3, k4, ynew)
        sq = 0.0
        finite = True
        for i in range(n):
            if not np.isfinite(ynew[i]):
                finite = False
            sq += ynew[i] * ynew[i]
        if not finite or np.sqrt(sq) > blowup:
            return n_out, REASON_BLOW_UP, n_u
        if stop_on_d and run_program(code, args, d_s, d_e, ynew, stack) <= 0.0:
            hit = s
            if not (start_in_d and first):
                lo = 0.0
                hi = s
                while hi - lo > tol_event:
                    mid = 0.5 * (lo + hi)
                    rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, mid, k1,
                             stack, tmp, k2, k3, k4, ym)
                    if run_program(code, args, d_s, d_e, ym, stack) <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                hit = hi
            if hit != s:
                rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, hit, k1,
                         stack, tmp, k2, k3, k4, ynew)
            out_t[n_out] = t + hit
            for i in range(n):
                out_y[n_out, i] = ynew[i]
            n_out += 1
            return n_out, REASON_ENTERED_D, n_u
        if run_program(code, args, c_s, c_e, ynew, stack) > tol_set:
            lo = 0.0
            hi = s
            while hi - lo > tol_event:
                mid = 0.5 * (lo + hi)
                rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, mid, k1,
                         stack, tmp, k2, k3, k4, ym)
                if run_program(code, args, c_s, c_e, ym, stack) <= tol_set:
                    lo = mid
                else:
                    hi = mid
            if lo > 0.0:
                rk4_step(code, args, fx_s, fx_e, fz_s, fz_e, kx, kz, n1, n2, eps, y, lo, k1,
                         stack, tmp, k2, k3, k4, ynew)
                out_t[n_out] = t + lo
                for i in range(n):
                    out_y[n_out, i] = ynew[i]
                n_out += 1
            return n_out, REASON_LEFT_C, n_u
        t = t + s
        for i in range(n):
            y[i] = ynew[i]
            out_y[n_out, i] = y[i]
        out_t[n_out] = t
        n_out += 1
        steps += 1
        first = False
    return n_out, REASON_CHUNK, n_u


@njit
def batch_program(code, args, start, end, X, stack_size):
    """Evaluate one program at every row of ``X``."""
    out = np.empty(X.shape[0])
    stack = np.empty(stack_size)
    for r in range(X.shape[0]):
        out[r] = run_program(code, args, start, end, X[r], stack)
    return out
