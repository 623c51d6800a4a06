"""Syntax-directed typechecker for SPCF and its symbolic extension.

The discipline is monomorphic and fully syntax-directed: every term has at
most one type in a context; abstractions carry their parameter type.  The
single exception is the beta-redex produced by `let` sugar, where the bound
variable's type is read off the (already typeable) right-hand side.
"""

from __future__ import annotations

from .syntax import (
    REAL, App, Arrow, Const, Delayed, Fix, IfLeq, InputVar, Lambda, PrimApp,
    Sample, SampleVar, Score, Term, Type, Var,
)


class SpcfTypeError(Exception):
    pass


def typecheck(term: Term, ctx: dict[str, Type] | None = None,
              registry=None) -> Type:
    """Return the unique type of `term` in `ctx`, or raise SpcfTypeError."""
    if registry is None:
        from .primitives import builtin_registry
        registry = builtin_registry()
    return _check(term, dict(ctx or {}), registry)


def _check(t: Term, ctx: dict[str, Type], reg) -> Type:
    if isinstance(t, Var):
        try:
            return ctx[t.name]
        except KeyError:
            raise SpcfTypeError(f"unbound variable {t.name!r}") from None
    if isinstance(t, (Const, Sample, InputVar, SampleVar)):
        return REAL
    if isinstance(t, (PrimApp, Delayed)):
        fn = reg.get(t.prim)
        if fn is None:
            raise SpcfTypeError(f"unknown primitive {t.prim!r}")
        if fn.arity != len(t.args):
            raise SpcfTypeError(
                f"{t.prim} takes {fn.arity} arguments, got {len(t.args)}")
        for a in t.args:
            if _check(a, ctx, reg) != REAL:
                raise SpcfTypeError(f"argument of {t.prim} is not R")
        return REAL
    if isinstance(t, Lambda):
        if t.param_type is None:
            raise SpcfTypeError(
                f"parameter {t.param!r} needs a type annotation")
        inner = dict(ctx)
        inner[t.param] = t.param_type
        return Arrow(t.param_type, _check(t.body, inner, reg))
    if isinstance(t, App):
        fun = t.fun
        if isinstance(fun, Lambda) and fun.param_type is None:
            # let-sugar redex: the binder's type comes from the argument
            arg_ty = _check(t.arg, ctx, reg)
            inner = dict(ctx)
            inner[fun.param] = arg_ty
            return _check(fun.body, inner, reg)
        fun_ty = _check(fun, ctx, reg)
        if not isinstance(fun_ty, Arrow):
            raise SpcfTypeError(f"cannot apply a term of type {fun_ty}")
        arg_ty = _check(t.arg, ctx, reg)
        if arg_ty != fun_ty.param:
            raise SpcfTypeError(
                f"function expects {fun_ty.param}, argument has type {arg_ty}")
        return fun_ty.result
    if isinstance(t, Fix):
        body_ty = _check(t.body, ctx, reg)
        if (isinstance(body_ty, Arrow) and isinstance(body_ty.param, Arrow)
                and body_ty.param == body_ty.result):
            return body_ty.result
        raise SpcfTypeError(
            f"fix needs type (s -> t) -> (s -> t), got {body_ty}")
    if isinstance(t, IfLeq):
        if _check(t.scrut, ctx, reg) != REAL:
            raise SpcfTypeError("conditional scrutinee is not R")
        then_ty = _check(t.then, ctx, reg)
        else_ty = _check(t.orelse, ctx, reg)
        if then_ty != else_ty:
            raise SpcfTypeError(
                f"branches disagree: {then_ty} vs {else_ty}")
        return then_ty
    if isinstance(t, Score):
        if _check(t.arg, ctx, reg) != REAL:
            raise SpcfTypeError("score argument is not R")
        return REAL
    raise SpcfTypeError(f"not a term: {t!r}")
