"""spcf-kit: interpreter, symbolic executor and density analyzer for SPCF."""

from .parser import SpcfSyntaxError, TypedProgram, parse, parse_file
from .typecheck import SpcfTypeError, typecheck
from .primitives import (
    BoundaryError, DomainError, PrimitiveFn, Registry, admissibility_probe,
    builtin_registry, compose_prims, constant, eval_prim, grad_prim,
    projection,
)
from .interp import (
    Configuration, RunResult, StepFail, estimate_termination,
    estimate_value_measure, replay, run_sampling, step, value_of, weight_of,
)

__all__ = [
    "BoundaryError", "Configuration", "DomainError", "PrimitiveFn",
    "Registry", "RunResult", "SpcfSyntaxError", "SpcfTypeError", "StepFail",
    "TypedProgram", "admissibility_probe", "builtin_registry",
    "compose_prims", "constant", "estimate_termination",
    "estimate_value_measure", "eval_prim", "grad_prim", "parse", "parse_file",
    "projection", "replay", "run_sampling", "step", "typecheck", "value_of",
    "weight_of",
]
