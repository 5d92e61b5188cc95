"""Certificate functions, grid screens of the inequalities and theorem checklists."""

from .bundle import (
    CertificateBundle,
    CompositeFunction,
    composite_flow_margin,
    compose_foster,
    compute_thresholds,
    parse_certificate,
    quadratic_form_threshold,
)
from .checks import GridSpec, ViolationReport, check_bound_inequality, check_flow_inequality, check_jump_expectation, run_check
from .clarke import estimate_clarke_gradient
from .functions import CertFunction, ComparisonFunction
from .theorems import CheckConfig, TheoremChecklist, evaluate_theorem, missing_fields

__all__ = [
    "CertFunction",
    "CertificateBundle",
    "CheckConfig",
    "ComparisonFunction",
    "CompositeFunction",
    "GridSpec",
    "TheoremChecklist",
    "ViolationReport",
    "check_bound_inequality",
    "check_flow_inequality",
    "check_jump_expectation",
    "composite_flow_margin",
    "compose_foster",
    "compute_thresholds",
    "estimate_clarke_gradient",
    "evaluate_theorem",
    "missing_fields",
    "parse_certificate",
    "quadratic_form_threshold",
    "run_check",
]
