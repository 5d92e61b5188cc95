"""Declarative scalar expressions.

Expressions are JSON trees over named variables::

    {"*": [0.5, {"^": [{"-": ["z1", "x1"]}, 2]}]}      # 0.5 (z1 - x1)^2

Numbers are constants, strings are variables. Operators: ``+``, ``*``
(n-ary), ``-`` (binary, or unary negation), ``/``, ``^`` (integer power),
``abs``, ``max``, ``min`` (n-ary), ``sqrt``, ``norm`` (Euclidean norm of
the listed entries), and ``poly`` (``{"coeffs": [...], "powers": [[...]]}``
over all variables of the signature).

A parsed expression is a tuple tree. It can be evaluated over a batch of
points, differentiated in forward mode, or compiled to the postfix
bytecode run by :mod:`spshds.kernels`. Evaluation order is fixed so the
tree evaluator and the bytecode interpreter return identical floats.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_ABS = 7
OP_MAX = 8
OP_MIN = 9
OP_POWI = 10
OP_SQRT = 11

_NARY = {"+": "add", "*": "mul", "max": "max", "min": "min"}
_NONSMOOTH = {"abs", "max", "min", "sqrt", "norm"}

Node = tuple


def parse(spec: Any, variables: Sequence[str]) -> Node:
    """Parse a JSON expression against an ordered variable signature."""
    index = {name: i for i, name in enumerate(variables)}
    return _parse(spec, index, tuple(variables))


def _parse(spec, index, names) -> Node:
    if isinstance(spec, bool):
        raise ConfigurationError(f"boolean is not an expression: {spec!r}")
    if isinstance(spec, (int, float)):
        return ("const", float(spec))
    if isinstance(spec, str):
        if spec not in index:
            raise ConfigurationError(f"unknown variable {spec!r}; expected one of {list(names)}")
        return ("var", index[spec])
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigurationError(f"malformed expression node: {spec!r}")
    (op, arg), = spec.items()
    if op in _NARY:
        items = _as_list(arg, op)
        if not items:
            raise ConfigurationError(f"operator {op!r} needs at least one operand")
        return (_NARY[op], tuple(_parse(a, index, names) for a in items))
    if op == "-":
        if isinstance(arg, list):
            if len(arg) == 1:
                return ("neg", _parse(arg[0], index, names))
            if len(arg) != 2:
                raise ConfigurationError("'-' takes one or two operands")
            return ("sub", (_parse(arg[0], index, names), _parse(arg[1], index, names)))
        return ("neg", _parse(arg, index, names))
    if op == "/":
        a = _as_list(arg, op)
        if len(a) != 2:
            raise ConfigurationError("'/' takes two operands")
        return ("div", (_parse(a[0], index, names), _parse(a[1], index, names)))
    if op == "^":
        a = _as_list(arg, op)
        if len(a) != 2 or not isinstance(a[1], int) or isinstance(a[1], bool):
            raise ConfigurationError("'^' takes [base, integer exponent]")
        return ("pow", (_parse(a[0], index, names), int(a[1])))
    if op in ("abs", "sqrt"):
        return (op, _parse(arg, index, names))
    if op == "norm":
        items = _as_list(arg, op)
        if not items:
            raise ConfigurationError("'norm' needs at least one entry")
        return ("norm", tuple(_parse(a, index, names) for a in items))
    if op == "poly":
        return _parse_poly(arg, index, names)
    raise ConfigurationError(f"unknown operator {op!r}")


def _as_list(arg, op):
    if not isinstance(arg, list):
        raise ConfigurationError(f"operator {op!r} expects a list of operands")
    return arg


def _parse_poly(arg, index, names) -> Node:
    try:
        coeffs = [float(c) for c in arg["coeffs"]]
        powers = [[int(p) for p in row] for row in arg["powers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed poly node: {arg!r}") from exc
    if len(coeffs) != len(powers) or not coeffs:
        raise ConfigurationError("poly needs one power row per coefficient")
    terms = []
    for c, row in zip(coeffs, powers):
        if len(row) != len(names) or any(p < 0 for p in row):
            raise ConfigurationError(f"poly power row {row} must have {len(names)} nonnegative entries")
        factors = [("const", c)]
        for i, p in enumerate(row):
            if p == 1:
                factors.append(("var", i))
            elif p > 1:
                factors.append(("pow", (("var", i), p)))
        terms.append(("mul", tuple(factors)) if len(factors) > 1 else factors[0])
    return ("add", tuple(terms)) if len(terms) > 1 else terms[0]


def is_smooth(node: Node) -> bool:
    op, arg = node
    if op in _NONSMOOTH:
        return False
    if op in ("const", "var"):
        return True
    if op == "pow":
        return is_smooth(arg[0]) and arg[1] >= 0
    if op in ("neg",):
        return is_smooth(arg)
    return all(is_smooth(a) for a in arg)


def _powi(a, k: int):
    if k == 0:
        return np.ones_like(a)
    r = a
    for _ in range(abs(k) - 1):
        r = r * a
    if k < 0:
        r = 1.0 / r
    return r


def evaluate(node: Node, X: np.ndarray) -> np.ndarray:
    """Evaluate over a batch ``X`` of shape (N, n_vars); returns shape (N,)."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _eval(node, X)


def _eval(node, X):
    op, arg = node
    if op == "const":
        return np.full(X.shape[0], arg)
    if op == "var":
        return X[:, arg].astype(float, copy=True)
    if op == "add":
        acc = _eval(arg[0], X)
        for a in arg[1:]:
            acc = acc + _eval(a, X)
        return acc
    if op == "mul":
        acc = _eval(arg[0], X)
        for a in arg[1:]:
            acc = acc * _eval(a, X)
        return acc
    if op == "max":
        acc = _eval(arg[0], X)
        for a in arg[1:]:
            acc = np.maximum(acc, _eval(a, X))
        return acc
    if op == "min":
        acc = _eval(arg[0], X)
        for a in arg[1:]:
            acc = np.minimum(acc, _eval(a, X))
        return acc
    if op == "sub":
        return _eval(arg[0], X) - _eval(arg[1], X)
    if op == "div":
        return _eval(arg[0], X) / _eval(arg[1], X)
    if op == "neg":
        return -_eval(arg, X)
    if op == "pow":
        return _powi(_eval(arg[0], X), arg[1])
    if op == "abs":
        return np.abs(_eval(arg, X))
    if op == "sqrt":
        return np.sqrt(_eval(arg, X))
    if op == "norm":
        e = _eval(arg[0], X)
        acc = e * e
        for a in arg[1:]:
            e = _eval(a, X)
            acc = acc + e * e
        return np.sqrt(acc)
    raise AssertionError(op)


def evaluate_with_grad(node: Node, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-mode value and gradient, shapes (N,) and (N, n_vars).

    At kinks of ``abs``/``max``/``min``/``norm`` the returned gradient is one
    element of the Clarke generalized gradient, not the whole set.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _grad(node, X)


def _grad(node, X):
    op, arg = node
    N, n = X.shape
    if op == "const":
        return np.full(N, arg), np.zeros((N, n))
    if op == "var":
        g = np.zeros((N, n))
        g[:, arg] = 1.0
        return X[:, arg].astype(float, copy=True), g
    if op == "add":
        v, g = _grad(arg[0], X)
        for a in arg[1:]:
            va, ga = _grad(a, X)
            v, g = v + va, g + ga
        return v, g
    if op == "mul":
        v, g = _grad(arg[0], X)
        for a in arg[1:]:
            va, ga = _grad(a, X)
            v, g = v * va, g * va[:, None] + ga * v[:, None]
        return v, g
    if op in ("max", "min"):
        v, g = _grad(arg[0], X)
        for a in arg[1:]:
            va, ga = _grad(a, X)
            keep = v >= va if op == "max" else v <= va
            v = np.where(keep, v, va)
            g = np.where(keep[:, None], g, ga)
        return v, g
    if op == "sub":
        va, ga = _grad(arg[0], X)
        vb, gb = _grad(arg[1], X)
        return va - vb, ga - gb
    if op == "div":
        va, ga = _grad(arg[0], X)
        vb, gb = _grad(arg[1], X)
        return va / vb, (ga * vb[:, None] - gb * va[:, None]) / (vb * vb)[:, None]
    if op == "neg":
        v, g = _grad(arg, X)
        return -v, -g
    if op == "pow":
        v, g = _grad(arg[0], X)
        k = arg[1]
        if k == 0:
            return np.ones(N), np.zeros((N, n))
        return _powi(v, k), (k * _powi(v, k - 1))[:, None] * g
    if op == "abs":
        v, g = _grad(arg, X)
        return np.abs(v), np.sign(v)[:, None] * g
    if op == "sqrt":
        v, g = _grad(arg, X)
        r = np.sqrt(v)
        scale = np.where(r > 0, 0.5 / np.where(r > 0, r, 1.0), 0.0)
        return r, scale[:, None] * g
    if op == "norm":
        parts = [_grad(a, X) for a in arg]
        acc = parts[0][0] * parts[0][0]
        for va, _ in parts[1:]:
            acc = acc + va * va
        r = np.sqrt(acc)
        safe = np.where(r > 0, r, 1.0)
        g = np.zeros((N, n))
        for va, ga in parts:
            g = g + (va / safe)[:, None] * ga
        g = np.where((r > 0)[:, None], g, 0.0)
        return r, g
    raise AssertionError(op)


class ProgramBuilder:
    """Accumulates compiled expressions into one flat bytecode buffer."""

    def __init__(self):
        self.code: list[int] = []
        self.args: list[float] = []
        self.max_depth = 1

    def add(self, node: Node) -> tuple[int, int]:
        start = len(self.code)
        depth = self._emit(node)
        self.max_depth = max(self.max_depth, depth)
        return start, len(self.code)

    def _push(self, op, arg=0.0):
        self.code.append(op)
        self.args.append(float(arg))

    def _emit(self, node) -> int:
        op, arg = node
        if op == "const":
            self._push(OP_CONST, arg)
            return 1
        if op == "var":
            self._push(OP_VAR, arg)
            return 1
        if op in ("add", "mul", "max", "min"):
            code = {"add": OP_ADD, "mul": OP_MUL, "max": OP_MAX, "min": OP_MIN}[op]
            depth = self._emit(arg[0])
            for a in arg[1:]:
                depth = max(depth, 1 + self._emit(a))
                self._push(code)
            return depth
        if op in ("sub", "div"):
            d0 = self._emit(arg[0])
            d1 = self._emit(arg[1])
            self._push(OP_SUB if op == "sub" else OP_DIV)
            return max(d0, 1 + d1)
        if op in ("neg", "abs", "sqrt"):
            depth = self._emit(arg)
            self._push({"neg": OP_NEG, "abs": OP_ABS, "sqrt": OP_SQRT}[op])
            return depth
        if op == "pow":
            depth = self._emit(arg[0])
            self._push(OP_POWI, arg[1])
            return depth
        if op == "norm":
            depth = self._emit(arg[0])
            self._push(OP_POWI, 2)
            for a in arg[1:]:
                depth = max(depth, 1 + self._emit(a))
                self._push(OP_POWI, 2)
                self._push(OP_ADD)
            self._push(OP_SQRT)
            return depth
        raise AssertionError(op)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        code = np.asarray(self.code if self.code else [OP_CONST], dtype=np.int64)
        args = np.asarray(self.args if self.args else [0.0], dtype=np.float64)
        return code, args


def variables(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(n)]
