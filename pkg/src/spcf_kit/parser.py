"""Surface syntax for SPCF programs (`.spcf` files).

Grammar (sugar expands during parsing, the core AST stays minimal):

    term  ::= "fn" "(" ident ":" type ")" "->" term
            | "let" ["rec"] ident param* [":" type] "=" term "in" term
            | "if" arith "<=" arith "then" term "else" term
            | "if" "flip" "(" ")" "then" term "else" term
            | "fix" term
            | arith
    arith ::= arith ("+"|"-"|"*"|"/") arith  (usual precedence) | "-" arith | app
    app   ::= atom+
    atom  ::= ident | real | "sample" | "score" "(" term ")"
            | prim "(" term {"," term} ")" | "(" term ")"
    type  ::= "R" | type "->" type | "(" type ")"

Desugarings: `let x = N in M` is `(fn x -> M) N`; `let rec f p.. : t = B in M`
binds `f` to `fix (fn (f : ..) -> fn p.. -> B)`; `if A <= B ..` with B not the
literal 0 compares `A - B` against 0; `flip ()` is `sample <= 0.5`.

Free identifiers are the program's input variables, all of type R, ordered by
first occurrence.  Comments are `(* ... *)` and may nest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    REAL, App, Arrow, Const, Fix, IfLeq, Lambda, PrimApp, SAMPLE, Score, Term,
    Type, Var, iter_subterms,
)
from .typecheck import typecheck


class SpcfSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class TypedProgram:
    """A typechecked term together with its input variables x_1..x_m."""

    term: Term
    free_vars: tuple[str, ...]
    result_type: Type

    @property
    def n_inputs(self) -> int:
        return len(self.free_vars)


KEYWORDS = {"fn", "let", "rec", "in", "if", "then", "else",
            "score", "sample", "fix", "flip"}

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+(\.\d+)?([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>->|<=|[()=,:+\-*/])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num" | "ident" | "op" | "eof"
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, bol = 0, 1, 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            bol = i + 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if src.startswith("(*", i):
            depth, j = 1, i + 2
            while j < n and depth:
                if src.startswith("(*", j):
                    depth += 1
                    j += 2
                elif src.startswith("*)", j):
                    depth -= 1
                    j += 2
                else:
                    if src[j] == "\n":
                        line += 1
                        bol = j + 1
                    j += 1
            if depth:
                raise SpcfSyntaxError("unterminated comment", line, i - bol + 1)
            i = j
            continue
        m = _TOKEN_RE.match(src, i)
        if not m:
            raise SpcfSyntaxError(f"unexpected character {c!r}", line, i - bol + 1)
        kind = m.lastgroup or "op"
        toks.append(_Tok(kind, m.group(), line, i - bol + 1))
        i = m.end()
    toks.append(_Tok("eof", "<eof>", line, n - bol + 1))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], prim_names: frozenset[str],
                 prim_arity):
        self.toks = toks
        self.pos = 0
        self.prim_names = prim_names
        self.prim_arity = prim_arity

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise SpcfSyntaxError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            self.error(f"expected {text!r}, found {t.text!r}")
        return self.next()

    def expect_ident(self) -> str:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            self.error("expected an identifier")
        if t.text in self.prim_names:
            self.error(f"{t.text!r} names a primitive and cannot be bound")
        return self.next().text

    # -- types -------------------------------------------------------------

    def parse_type(self) -> Type:
        left = self.parse_type_atom()
        if self.peek().text == "->":
            self.next()
            return Arrow(left, self.parse_type())
        return left

    def parse_type_atom(self) -> Type:
        t = self.peek()
        if t.text == "R":
            self.next()
            return REAL
        if t.text == "(":
            self.next()
            ty = self.parse_type()
            self.expect(")")
            return ty
        self.error("expected a type")

    # -- terms -------------------------------------------------------------

    def parse_term(self) -> Term:
        t = self.peek()
        if t.text == "fn":
            return self.parse_fn()
        if t.text == "let":
            return self.parse_let()
        if t.text == "if":
            return self.parse_if()
        if t.text == "fix":
            self.next()
            return Fix(self.parse_term())
        return self.parse_additive()

    def parse_fn(self) -> Term:
        self.expect("fn")
        name, ty = self.parse_param()
        self.expect("->")
        return Lambda(name, ty, self.parse_term())

    def parse_param(self) -> tuple[str, Type]:
        self.expect("(")
        name = self.expect_ident()
        self.expect(":")
        ty = self.parse_type()
        self.expect(")")
        return name, ty

    def parse_let(self) -> Term:
        self.expect("let")
        recursive = self.peek().text == "rec"
        if recursive:
            self.next()
        name = self.expect_ident()
        params: list[tuple[str, Type]] = []
        while self.peek().text == "(" and self.peek(1).kind == "ident" \
                and self.peek(2).text == ":":
            params.append(self.parse_param())
        result_ty: Type | None = None
        if self.peek().text == ":":
            self.next()
            result_ty = self.parse_type()
        self.expect("=")
        rhs = self.parse_term()
        self.expect("in")
        body = self.parse_term()

        for pname, pty in reversed(params):
            rhs = Lambda(pname, pty, rhs)
        if recursive:
            if not params:
                self.error(f"'let rec {name}' needs at least one parameter")
            if result_ty is None:
                self.error(f"'let rec {name}' needs a result type annotation")
            fn_ty: Type = result_ty
            for _, pty in reversed(params):
                fn_ty = Arrow(pty, fn_ty)
            rhs = Fix(Lambda(name, fn_ty, rhs))
        return App(Lambda(name, None, body), rhs)

    def parse_if(self) -> Term:
        self.expect("if")
        if self.peek().text == "flip":
            self.next()
            self.expect("(")
            self.expect(")")
            scrut: Term = PrimApp("sub", (SAMPLE, Const(0.5)))
        else:
            lhs = self.parse_additive()
            self.expect("<=")
            rhs = self.parse_additive()
            if isinstance(rhs, Const) and rhs.value == 0.0:
                scrut = lhs
            else:
                scrut = PrimApp("sub", (lhs, rhs))
        self.expect("then")
        then = self.parse_term()
        self.expect("else")
        return IfLeq(scrut, then, self.parse_term())

    def parse_additive(self) -> Term:
        t = self.parse_multiplicative()
        while self.peek().text in ("+", "-"):
            op = "add" if self.next().text == "+" else "sub"
            t = PrimApp(op, (t, self.parse_multiplicative()))
        return t

    def parse_multiplicative(self) -> Term:
        t = self.parse_unary()
        while self.peek().text in ("*", "/"):
            op = "mul" if self.next().text == "*" else "div"
            t = PrimApp(op, (t, self.parse_unary()))
        return t

    def parse_unary(self) -> Term:
        if self.peek().text == "-":
            self.next()
            t = self.parse_unary()
            if isinstance(t, Const):
                return Const(-t.value)
            return PrimApp("neg", (t,))
        return self.parse_app()

    def _starts_atom(self) -> bool:
        t = self.peek()
        if t.kind == "num" or t.text in ("(", "sample", "score"):
            return True
        return t.kind == "ident" and t.text not in KEYWORDS

    def parse_app(self) -> Term:
        t = self.parse_atom()
        while self._starts_atom():
            t = App(t, self.parse_atom())
        return t

    def parse_atom(self) -> Term:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return Const(float(t.text))
        if t.text == "sample":
            self.next()
            return SAMPLE
        if t.text == "score":
            self.next()
            self.expect("(")
            arg = self.parse_term()
            self.expect(")")
            return Score(arg)
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.next()
            if t.text in self.prim_names:
                if self.peek().text != "(":
                    self.error(f"primitive {t.text!r} needs arguments", t)
                self.next()
                args = [self.parse_term()]
                while self.peek().text == ",":
                    self.next()
                    args.append(self.parse_term())
                self.expect(")")
                want = self.prim_arity(t.text)
                if len(args) != want:
                    self.error(f"{t.text} takes {want} arguments, got {len(args)}", t)
                return PrimApp(t.text, tuple(args))
            return Var(t.text)
        if t.text == "(":
            self.next()
            inner = self.parse_term()
            self.expect(")")
            return inner
        self.error(f"unexpected {t.text!r}")


def _ordered_free_vars(term: Term) -> tuple[str, ...]:
    # First-occurrence order, matching the left-to-right reading of the source.
    seen: list[str] = []

    def walk(t: Term, env: frozenset[str]):
        if isinstance(t, Var):
            if t.name not in env and t.name not in seen:
                seen.append(t.name)
        elif isinstance(t, Lambda):
            walk(t.body, env | {t.param})
        elif isinstance(t, App):
            walk(t.fun, env)
            walk(t.arg, env)
        elif isinstance(t, PrimApp):
            for a in t.args:
                walk(a, env)
        elif isinstance(t, Fix):
            walk(t.body, env)
        elif isinstance(t, IfLeq):
            walk(t.scrut, env)
            walk(t.then, env)
            walk(t.orelse, env)
        elif isinstance(t, Score):
            walk(t.arg, env)

    walk(term, frozenset())
    return tuple(seen)


def parse(source: str, registry=None) -> TypedProgram:
    """Parse and typecheck a program; free identifiers become inputs."""
    if registry is None:
        from .primitives import builtin_registry
        registry = builtin_registry()
    toks = _tokenize(source)
    p = _Parser(toks, frozenset(registry.names()), registry.arity)
    term = p.parse_term()
    if p.peek().kind != "eof":
        p.error(f"trailing input {p.peek().text!r}")
    for sub in iter_subterms(term):
        if isinstance(sub, Const) and not _finite(sub.value):
            raise SpcfSyntaxError("literals must be finite", 0, 0)
    inputs = _ordered_free_vars(term)
    ctx = {name: REAL for name in inputs}
    result_type = typecheck(term, ctx, registry)
    return TypedProgram(term, inputs, result_type)


def parse_file(path: str, registry=None) -> TypedProgram:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), registry)


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))
