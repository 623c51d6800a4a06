"""Surface syntax: grammar, sugar expansion, error reporting."""

import pytest

from spcf_kit.parser import SpcfSyntaxError, parse
from spcf_kit.syntax import (
    App, Arrow, Const, Fix, IfLeq, Lambda, PrimApp, REAL, SAMPLE, Score, Var,
)
from spcf_kit.typecheck import SpcfTypeError


class TestBasicForms:
    def test_score_sample(self):
        prog = parse("score(sample)")
        assert prog.term == Score(SAMPLE)
        assert prog.result_type == REAL

    def test_let_is_beta_redex_sugar(self):
        prog = parse("let x = sample in x")
        assert prog.term == App(Lambda("x", None, Var("x")), SAMPLE)

    def test_real_applied_as_function_is_type_error(self):
        with pytest.raises(SpcfTypeError):
            parse("sample sample")

    def test_annotated_lambda(self):
        prog = parse("fn (y : R) -> y")
        assert prog.term == Lambda("y", REAL, Var("y"))
        assert prog.result_type == Arrow(REAL, REAL)

    def test_arrow_annotation(self):
        prog = parse("fn (f : R -> R) -> f 1")
        assert prog.result_type == Arrow(Arrow(REAL, REAL), REAL)

    def test_fix_form(self):
        prog = parse("fix (fn (f : R -> R) -> f)")
        assert isinstance(prog.term, Fix)
        assert prog.result_type == Arrow(REAL, REAL)


class TestSugar:
    def test_if_compares_against_zero_directly(self):
        prog = parse("if sample <= 0 then 1 else 2")
        assert prog.term == IfLeq(SAMPLE, Const(1.0), Const(2.0))

    def test_if_general_comparison_subtracts(self):
        prog = parse("if sample <= 0.5 then 1 else 2")
        assert prog.term == IfLeq(PrimApp("sub", (SAMPLE, Const(0.5))),
                                  Const(1.0), Const(2.0))

    def test_flip_sugar(self):
        assert parse("if flip () then 1 else 2").term == \
            parse("if sample <= 0.5 then 1 else 2").term

    def test_let_rec_unfolds_to_fix(self):
        prog = parse("let rec f (x : R) : R = f x in f 1")
        assert isinstance(prog.term, App)
        binder = prog.term.fun
        assert isinstance(binder, Lambda) and binder.param == "f"
        rhs = prog.term.arg
        assert isinstance(rhs, Fix)
        assert rhs.body.param_type == Arrow(REAL, REAL)

    def test_let_multi_params_curry(self):
        prog = parse("let g (x : R) (y : R) = x + y in g 1 2")
        rhs = prog.term.arg
        assert isinstance(rhs, Lambda) and isinstance(rhs.body, Lambda)

    def test_infix_precedence(self):
        prog = parse("1 + 2 * 3")
        assert prog.term == PrimApp(
            "add", (Const(1.0), PrimApp("mul", (Const(2.0), Const(3.0)))))

    def test_unary_minus_folds_literals(self):
        assert parse("-1.5").term == Const(-1.5)
        assert parse("-(sample)").term == PrimApp("neg", (SAMPLE,))

    def test_application_binds_tighter_than_infix(self):
        prog = parse("fn (f : R -> R) -> f 1 + f 2")
        body = prog.term.body
        assert body.prim == "add"
        assert isinstance(body.args[0], App)

    def test_comments_nest(self):
        prog = parse("(* a (* nested *) b *) 1")
        assert prog.term == Const(1.0)


class TestErrors:
    def test_syntax_error_carries_position(self):
        with pytest.raises(SpcfSyntaxError) as err:
            parse("let x = in x")
        assert err.value.line == 1
        assert err.value.col > 0

    def test_prim_arity_mismatch(self):
        with pytest.raises(SpcfSyntaxError, match="3 arguments"):
            parse("pdfnorm(1, 2)")

    def test_prim_needs_arguments(self):
        with pytest.raises(SpcfSyntaxError, match="needs arguments"):
            parse("exp")

    def test_binding_a_primitive_name_rejected(self):
        with pytest.raises(SpcfSyntaxError, match="primitive"):
            parse("let exp = 1 in exp")

    def test_let_rec_needs_result_annotation(self):
        with pytest.raises(SpcfSyntaxError, match="result type"):
            parse("let rec f (x : R) = f x in f 1")

    def test_unterminated_comment(self):
        with pytest.raises(SpcfSyntaxError, match="comment"):
            parse("(* oops")

    def test_unannotated_lambda_rejected_standalone(self):
        with pytest.raises(SpcfTypeError, match="annotation"):
            from spcf_kit.syntax import Lambda, Var
            from spcf_kit.typecheck import typecheck
            typecheck(Lambda("y", None, Var("y")), {})

    def test_nan_literal_rejected(self):
        with pytest.raises(SpcfSyntaxError):
            parse("1e999")


class TestInputs:
    def test_free_identifiers_become_inputs_in_order(self):
        prog = parse("theta + sigma * theta")
        assert prog.free_vars == ("theta", "sigma")
        assert prog.result_type == REAL

    def test_closed_program_has_no_inputs(self, programs):
        assert programs["ped"].free_vars == ()
        assert programs["input_gauss"].free_vars == ("theta",)
