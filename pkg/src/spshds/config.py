"""Declarative JSON system definitions and their lowering to bytecode.

A config document has four sections::

    {"system": {...}, "certificate": {...}, "execution": {...}, "verification": {...}}

Only ``system`` is required. Maps are lists of selections, each selection a
list of expressions (see :mod:`spshds.expr`) over ``x1..``, ``z1..`` and,
for the jump map, ``v1..``. Sets are written through a signed proximity
expression that is nonpositive exactly on the set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import expr
from .core import FiniteSupport, SetPredicate, SetValuedMap, SystemDefinition, UniformBox
from .errors import ConfigurationError

SYSTEM_KEYS = {
    "name", "n1", "n2", "flow_x", "flow_z", "jump", "flow_set", "jump_set",
    "jump_input", "qss", "qss_single_valued", "probe_box",
}


@dataclass(frozen=True, eq=False)
class CompiledSystem:
    """Bytecode for the flow maps and the C / D proximity functions."""

    code: np.ndarray
    args: np.ndarray
    fx_s: np.ndarray
    fx_e: np.ndarray
    fz_s: np.ndarray
    fz_e: np.ndarray
    c_range: tuple[int, int]
    d_range: tuple[int, int]
    stack_size: int
    c_node: tuple
    d_node: tuple


@dataclass(eq=False)
class LoadedConfig:
    system: SystemDefinition
    certificate: Any = None
    certificate_errors: list[str] = field(default_factory=list)
    execution: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def state_variables(n1: int, n2: int) -> list[str]:
    return expr.variables("x", n1) + expr.variables("z", n2)


def _is_expr(item) -> bool:
    return not isinstance(item, list)


def parse_map(spec, variables: list[str], dim: int, name: str) -> tuple[list[list[tuple]], bool]:
    """Parse a map spec into a list of selections of expression nodes."""
    convexified = False
    if isinstance(spec, dict) and "affine" in spec:
        try:
            A = np.asarray(spec["affine"]["A"], dtype=float)
            b = np.asarray(spec["affine"].get("b", np.zeros(dim)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{name}: malformed affine map") from exc
        if A.shape != (dim, len(variables)) or b.shape != (dim,):
            raise ConfigurationError(f"{name}: affine A must be {dim}x{len(variables)} and b of length {dim}")
        sel = []
        for i in range(dim):
            terms = [{"*": [float(A[i, k]), v]} for k, v in enumerate(variables) if A[i, k] != 0.0]
            terms.append(float(b[i]))
            sel.append({"+": terms} if len(terms) > 1 else terms[0])
        spec = [sel]
    elif isinstance(spec, dict) and "selections" in spec:
        convexified = bool(spec.get("convexified", False))
        spec = spec["selections"]
    if not isinstance(spec, list) or not spec:
        raise ConfigurationError(f"{name}: expected a nonempty list of selections")
    selections = [spec] if all(_is_expr(s) for s in spec) else spec
    out = []
    for sel in selections:
        if not isinstance(sel, list) or len(sel) != dim:
            raise ConfigurationError(f"{name}: every selection needs {dim} components, got {sel!r}")
        out.append([expr.parse(e, variables) for e in sel])
    return out, convexified


def _coords(spec_coords, variables: list[str], size: int) -> list[int]:
    if spec_coords is None:
        if size != len(variables):
            raise ConfigurationError("set center/bounds must cover every coordinate when 'coords' is omitted")
        return list(range(size))
    idx = []
    for c in spec_coords:
        if isinstance(c, str):
            if c not in variables:
                raise ConfigurationError(f"unknown coordinate {c!r}")
            idx.append(variables.index(c))
        else:
            idx.append(int(c))
    if len(idx) != size:
        raise ConfigurationError("coords length does not match the set data")
    return idx


def parse_set(spec, variables: list[str]) -> tuple:
    """Signed proximity expression node for a set spec (nonpositive inside)."""
    if spec == "all" or spec == {"all": True}:
        return ("const", -1.0)
    if spec == "empty" or spec == {"empty": True}:
        return ("const", 1.0)
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigurationError(f"malformed set {spec!r}")
    (kind, arg), = spec.items()
    try:
        if kind == "le":
            return expr.parse(arg, variables)
        if kind in ("and", "or"):
            parts = tuple(parse_set(s, variables) for s in arg)
            if not parts:
                raise ConfigurationError(f"'{kind}' needs at least one set")
            return ("max" if kind == "and" else "min", parts)
        if kind == "halfspace":
            a = np.asarray(arg["a"], dtype=float)
            b = float(arg["b"])
            if a.size != len(variables) or not np.any(a):
                raise ConfigurationError("halfspace normal must be nonzero with one entry per coordinate")
            scale = float(np.sqrt(np.sum(a * a)))
            terms = [("mul", (("const", a[i] / scale), ("var", i))) for i in range(a.size) if a[i] != 0.0]
            terms.append(("const", -b / scale))
            return ("add", tuple(terms))
        if kind in ("ball", "outside_ball"):
            c = np.asarray(arg["center"], dtype=float).ravel()
            r = float(arg["radius"])
            if r < 0:
                raise ConfigurationError("ball radius must be nonnegative")
            idx = _coords(arg.get("coords"), variables, c.size)
            norm = ("norm", tuple(("sub", (("var", i), ("const", ci))) for i, ci in zip(idx, c)))
            if kind == "ball":
                return ("sub", (norm, ("const", r)))
            return ("sub", (("const", r), norm))
        if kind == "box":
            lo = arg.get("low")
            hi = arg.get("high")
            size = len(lo if lo is not None else hi)
            idx = _coords(arg.get("coords"), variables, size)
            parts = []
            for k, i in enumerate(idx):
                if lo is not None and lo[k] is not None:
                    parts.append(("sub", (("const", float(lo[k])), ("var", i))))
                if hi is not None and hi[k] is not None:
                    parts.append(("sub", (("var", i), ("const", float(hi[k])))))
            if not parts:
                return ("const", -1.0)
            return ("max", tuple(parts)) if len(parts) > 1 else parts[0]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed set {spec!r}") from exc
    raise ConfigurationError(f"unknown set kind {kind!r}")


def parse_distribution(spec):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigurationError(f"malformed jump input distribution {spec!r}")
    (kind, arg), = spec.items()
    try:
        if kind == "finite":
            return FiniteSupport(np.asarray(arg["values"], dtype=float), np.asarray(arg["probs"], dtype=float))
        if kind == "uniform_box":
            return UniformBox(arg["low"], arg["high"])
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed jump input distribution {spec!r}") from exc
    raise ConfigurationError(f"unknown distribution kind {kind!r}")


def _node_map(selections: list[list[tuple]], dim: int, convexified: bool, name: str) -> SetValuedMap:
    def fn(*arrays):
        X = np.concatenate(arrays, axis=1)
        out = np.empty((X.shape[0], len(selections), dim))
        for k, sel in enumerate(selections):
            for i, node in enumerate(sel):
                out[:, k, i] = expr.evaluate(node, X)
        return out

    return SetValuedMap(fn, dim, convexified, name)


def _node_predicate(node: tuple, variables: list[str], name: str) -> SetPredicate:
    return SetPredicate.from_proximity(lambda Y: expr.evaluate(node, np.atleast_2d(Y)), name)


def build_system(cfg: dict) -> SystemDefinition:
    if not isinstance(cfg, dict):
        raise ConfigurationError("system section must be an object")
    unknown = set(cfg) - SYSTEM_KEYS
    if unknown:
        raise ConfigurationError(f"unknown system keys: {sorted(unknown)}")
    try:
        n1 = int(cfg["n1"])
        n2 = int(cfg["n2"])
        fx_spec, fz_spec, m_spec = cfg["flow_x"], cfg["flow_z"], cfg["qss"]
    except KeyError as exc:
        raise ConfigurationError(f"system section is missing {exc.args[0]!r}") from exc
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("n1 and n2 must be at least 1")
    yvars = state_variables(n1, n2)
    dist = parse_distribution(cfg.get("jump_input", {"finite": {"values": [0.0], "probs": [1.0]}}))
    jvars = yvars + expr.variables("v", dist.dim)
    xvars = expr.variables("x", n1)

    fx, fx_cvx = parse_map(fx_spec, yvars, n1, "flow_x")
    fz, fz_cvx = parse_map(fz_spec, yvars, n2, "flow_z")
    g, g_cvx = parse_map(cfg.get("jump", [[v for v in yvars]]), jvars, n1 + n2, "jump")
    m, m_cvx = parse_map(m_spec, xvars, n2, "qss")
    c_node = parse_set(cfg.get("flow_set", "all"), yvars)
    d_node = parse_set(cfg.get("jump_set", "empty"), yvars)

    builder = expr.ProgramBuilder()
    fx_r = np.array([[builder.add(n) for n in sel] for sel in fx], dtype=np.int64)
    fz_r = np.array([[builder.add(n) for n in sel] for sel in fz], dtype=np.int64)
    c_r = builder.add(c_node)
    d_r = builder.add(d_node)
    code, args = builder.arrays()
    compiled = CompiledSystem(
        code=code, args=args,
        fx_s=np.ascontiguousarray(fx_r[:, :, 0]), fx_e=np.ascontiguousarray(fx_r[:, :, 1]),
        fz_s=np.ascontiguousarray(fz_r[:, :, 0]), fz_e=np.ascontiguousarray(fz_r[:, :, 1]),
        c_range=c_r, d_range=d_r, stack_size=builder.max_depth + 1,
        c_node=c_node, d_node=d_node,
    )
    probe = cfg.get("probe_box")
    single = bool(cfg.get("qss_single_valued", len(m) == 1))
    if single and len(m) != 1:
        raise ConfigurationError("qss_single_valued requires exactly one qss selection")
    return SystemDefinition(
        n1=n1, n2=n2,
        F_x=_node_map(fx, n1, fx_cvx, "F_x"),
        F_z=_node_map(fz, n2, fz_cvx, "F_z"),
        G=_node_map(g, n1 + n2, g_cvx, "G"),
        C=_node_predicate(c_node, yvars, "C"),
        D=_node_predicate(d_node, yvars, "D"),
        jump_input=dist,
        M=_node_map(m, n2, m_cvx, "M"),
        qss_single_valued=single,
        probe_low=None if probe is None else probe["low"],
        probe_high=None if probe is None else probe["high"],
        compiled=compiled,
        name=str(cfg.get("name", "")),
        source=cfg,
    )


def load_config(source) -> LoadedConfig:
    """Load a config from a dict, a JSON string path, or a Path."""
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {source}: {exc}") from exc
    else:
        raw = source
    if not isinstance(raw, dict) or "system" not in raw:
        raise ConfigurationError("config must be an object with a 'system' section")
    unknown = set(raw) - {"system", "certificate", "execution", "verification"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    system = build_system(raw["system"])
    cert, missing = None, []
    if "certificate" in raw:
        from .certificates.bundle import parse_certificate

        cert, missing = parse_certificate(raw["certificate"], system)
    for key in ("execution", "verification"):
        if key in raw and not isinstance(raw[key], dict):
            raise ConfigurationError(f"'{key}' section must be an object")
    return LoadedConfig(
        system=system,
        certificate=cert,
        certificate_errors=missing,
        execution=dict(raw.get("execution", {})),
        verification=dict(raw.get("verification", {})),
        raw=raw,
    )
