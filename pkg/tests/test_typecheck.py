"""Typing rules for the core and symbolic syntax."""

import pytest

from spcf_kit.parser import parse
from spcf_kit.syntax import (
    App, Arrow, Const, Delayed, Fix, IfLeq, InputVar, Lambda, REAL, SAMPLE,
    SampleVar, Score, Var,
)
from spcf_kit.typecheck import SpcfTypeError, typecheck

RR = Arrow(REAL, REAL)


def test_fix_types_to_unfolded_arrow():
    t = Fix(Lambda("f", RR, Lambda("x", REAL, App(Var("f"), Var("x")))))
    assert typecheck(t) == RR


def test_fix_of_mismatched_body_rejected():
    t = Fix(Lambda("f", RR, Const(1.0)))
    with pytest.raises(SpcfTypeError, match="fix"):
        typecheck(t)


def test_score_needs_ground_argument():
    with pytest.raises(SpcfTypeError):
        typecheck(Score(Lambda("y", REAL, Var("y"))))


def test_branches_must_agree():
    t = IfLeq(Const(0.0), Const(1.0), Lambda("y", REAL, Var("y")))
    with pytest.raises(SpcfTypeError, match="branches"):
        typecheck(t)


def test_unbound_variable():
    with pytest.raises(SpcfTypeError, match="unbound"):
        typecheck(Var("nope"))


def test_scrutinee_must_be_ground():
    t = IfLeq(Lambda("y", REAL, Var("y")), Const(1.0), Const(1.0))
    with pytest.raises(SpcfTypeError):
        typecheck(t)


def test_sample_and_distinguished_vars_are_ground():
    assert typecheck(SAMPLE) == REAL
    assert typecheck(InputVar(1)) == REAL
    assert typecheck(SampleVar(3)) == REAL


def test_delayed_application_types_like_a_primitive():
    assert typecheck(Delayed("mul", (SampleVar(1), Const(3.0)))) == REAL
    with pytest.raises(SpcfTypeError, match="arguments"):
        typecheck(Delayed("mul", (SampleVar(1),)))


def test_let_sugar_infers_binder_type_from_rhs():
    prog = parse("let f = fn (x : R) -> x in f 1")
    assert prog.result_type == REAL


def test_argument_type_mismatch():
    with pytest.raises(SpcfTypeError, match="expects"):
        parse("(fn (f : R -> R) -> f) 1")


def test_corpus_types_are_ground(programs):
    for name, prog in programs.items():
        assert prog.result_type == REAL, name
