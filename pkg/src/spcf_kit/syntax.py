"""AST for SPCF: types, terms, substitution, and unique redex decomposition.

SPCF is call-by-value PCF over 64-bit reals with two probabilistic
constructs: `sample` draws from Uniform(0,1) and `score(M)` multiplies the
run's weight by a non-negative real.  The same node classes also cover the
symbolic dialect used by the branch explorer: input variables ``x_i``,
sampling variables ``a_j``, and delayed primitive applications whose
evaluation is postponed until a concrete point is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Types

class Type:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class RealType(Type):
    def __str__(self) -> str:
        return "R"


@dataclass(frozen=True, slots=True)
class Arrow(Type):
    param: Type
    result: Type

    def __str__(self) -> str:
        p = str(self.param)
        if isinstance(self.param, Arrow):
            p = f"({p})"
        return f"{p} -> {self.result}"


REAL = RealType()


# ---------------------------------------------------------------------------
# Terms

class Term:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Term):
    name: str


@dataclass(frozen=True, slots=True)
class Const(Term):
    value: float


@dataclass(frozen=True, slots=True)
class PrimApp(Term):
    prim: str
    args: tuple[Term, ...]


@dataclass(frozen=True, slots=True)
class Lambda(Term):
    param: str
    param_type: Optional[Type]  # None only for let-sugar redexes
    body: Term


@dataclass(frozen=True, slots=True)
class App(Term):
    fun: Term
    arg: Term


@dataclass(frozen=True, slots=True)
class Fix(Term):
    body: Term


@dataclass(frozen=True, slots=True)
class IfLeq(Term):
    scrut: Term
    then: Term
    orelse: Term


@dataclass(frozen=True, slots=True)
class Sample(Term):
    pass


@dataclass(frozen=True, slots=True)
class Score(Term):
    arg: Term


# Symbolic-only nodes.  InputVar(1) is the first program input x_1;
# SampleVar(1) is the first sampling variable a_1; Delayed holds a primitive
# application whose arguments are symbolic values of ground type.

@dataclass(frozen=True, slots=True)
class InputVar(Term):
    index: int  # 1-based


@dataclass(frozen=True, slots=True)
class SampleVar(Term):
    index: int  # 1-based


@dataclass(frozen=True, slots=True)
class Delayed(Term):
    prim: str
    args: tuple[Term, ...]


SAMPLE = Sample()

#: Symbolic values of ground type; these denote partial functions on points.
ValueExpr = Union[Const, InputVar, SampleVar, Delayed]


def is_value(t: Term) -> bool:
    """Concrete values: constants and abstractions."""
    return isinstance(t, (Const, Lambda))


def is_symbolic_value(t: Term) -> bool:
    return isinstance(t, (Const, Lambda, InputVar, SampleVar, Delayed))


def is_value_expr(t: Term) -> bool:
    """Ground-type symbolic values (no abstractions)."""
    if isinstance(t, (Const, InputVar, SampleVar)):
        return True
    if isinstance(t, Delayed):
        return all(is_value_expr(a) for a in t.args)
    return False


# ---------------------------------------------------------------------------
# Free variables and substitution

# Free-variable sets are memoized by object identity: terms are immutable
# and evaluation preserves sharing, so the same subtree is queried millions
# of times during a long run.  Holding the term in the value keeps its id
# stable; the table is cleared when it grows too large.
_EMPTY: frozenset[str] = frozenset()
_FV_MEMO: dict[int, tuple[Term, frozenset[str]]] = {}


def free_vars(t: Term) -> frozenset[str]:
    """Free ordinary variables (distinguished x_i/a_j are never bound)."""
    ent = _FV_MEMO.get(id(t))
    if ent is not None and ent[0] is t:
        return ent[1]
    tt = type(t)
    if tt is Var:
        fv = frozenset((t.name,))
    elif tt in (Const, Sample, InputVar, SampleVar):
        return _EMPTY
    elif tt is Lambda:
        fv = free_vars(t.body)
        if t.param in fv:
            fv = fv - {t.param}
    elif tt is App:
        fv = free_vars(t.fun) | free_vars(t.arg)
    elif tt in (PrimApp, Delayed):
        fv = _EMPTY
        for a in t.args:
            fv |= free_vars(a)
    elif tt is Fix:
        fv = free_vars(t.body)
    elif tt is IfLeq:
        fv = free_vars(t.scrut) | free_vars(t.then) | free_vars(t.orelse)
    elif tt is Score:
        fv = free_vars(t.arg)
    else:
        raise TypeError(f"not a term: {t!r}")
    if len(_FV_MEMO) > 1_000_000:
        _FV_MEMO.clear()
    _FV_MEMO[id(t)] = (t, fv)
    return fv


_fresh_counter = 0


def fresh_name(base: str = "z") -> str:
    global _fresh_counter
    _fresh_counter += 1
    return f"_{base}{_fresh_counter}"


def subst(t: Term, name: str, repl: Term) -> Term:
    """Capture-avoiding substitution t[repl/name].

    During evaluation `repl` is always closed, so the renaming branch never
    fires there; it exists so the operation is total on arbitrary terms.
    """
    fv_repl = free_vars(repl)
    memo_get = _FV_MEMO.get

    def go(t: Term) -> Term:
        # returns t itself when nothing changes, preserving sharing
        tt = type(t)
        if tt is Var:
            return repl if t.name == name else t
        if tt is Const or tt is Sample or tt is SampleVar or tt is InputVar:
            return t
        ent = memo_get(id(t))
        fv = ent[1] if ent is not None and ent[0] is t else free_vars(t)
        if name not in fv:
            return t
        if tt is Lambda:
            # t.param != name (else name would not be free in t)
            if t.param in fv_repl:
                renamed = fresh_name(t.param)
                body = subst(t.body, t.param, Var(renamed))
                return Lambda(renamed, t.param_type, subst(body, name, repl))
            return Lambda(t.param, t.param_type, go(t.body))
        if tt is App:
            return App(go(t.fun), go(t.arg))
        if tt in (PrimApp, Delayed):
            return tt(t.prim, tuple(go(a) for a in t.args))
        if tt is Fix:
            return Fix(go(t.body))
        if tt is IfLeq:
            return IfLeq(go(t.scrut), go(t.then), go(t.orelse))
        if tt is Score:
            return Score(go(t.arg))
        raise TypeError(f"not a term: {t!r}")

    return go(t)


_UNFOLD_CACHE: dict[int, tuple[Term, "Lambda"]] = {}


def unfold_fix(r: Fix) -> Lambda:
    """One unfolding of `fix (fn y -> M)`: `fn z -> (M[fix (fn y -> M)/y]) z`.

    The result is cached by the identity of the (immutable) fix node, since
    recursive programs contract the same fix redex once per loop iteration.
    """
    ent = _UNFOLD_CACHE.get(id(r))
    if ent is not None and ent[0] is r:
        return ent[1]
    lam = r.body
    z_ty = lam.param_type.param if isinstance(lam.param_type, Arrow) else None
    out = Lambda("_fix", z_ty,
                 App(subst(lam.body, lam.param, r), Var("_fix")))
    if len(_UNFOLD_CACHE) > 100_000:
        _UNFOLD_CACHE.clear()
    _UNFOLD_CACHE[id(r)] = (r, out)
    return out


# ---------------------------------------------------------------------------
# Evaluation contexts and unique decomposition
#
# A context is a stack of frames, outermost first; plug() re-assembles the
# term.  Decomposition follows the call-by-value, left-to-right discipline:
#
#   E ::= [] | E M | (fn y -> M) E | f(V.., E, M..) | fix E
#       | if E <= 0 then M else N | score(E)

@dataclass(frozen=True, slots=True)
class AppFun:
    arg: Term


@dataclass(frozen=True, slots=True)
class AppArg:
    fun: Term  # an abstraction value


@dataclass(frozen=True, slots=True)
class PrimArg:
    prim: str
    done: tuple[Term, ...]
    pending: tuple[Term, ...]


@dataclass(frozen=True, slots=True)
class FixBody:
    pass


@dataclass(frozen=True, slots=True)
class IfScrut:
    then: Term
    orelse: Term


@dataclass(frozen=True, slots=True)
class ScoreArg:
    pass


Frame = Union[AppFun, AppArg, PrimArg, FixBody, IfScrut, ScoreArg]
Context = tuple[Frame, ...]


def plug(ctx: Context, t: Term) -> Term:
    for fr in reversed(ctx):
        if isinstance(fr, AppFun):
            t = App(t, fr.arg)
        elif isinstance(fr, AppArg):
            t = App(fr.fun, t)
        elif isinstance(fr, PrimArg):
            t = PrimApp(fr.prim, fr.done + (t,) + fr.pending)
        elif isinstance(fr, FixBody):
            t = Fix(t)
        elif isinstance(fr, IfScrut):
            t = IfLeq(t, fr.then, fr.orelse)
        elif isinstance(fr, ScoreArg):
            t = Score(t)
        else:
            raise TypeError(f"not a frame: {fr!r}")
    return t


@dataclass(frozen=True, slots=True)
class Decomposition:
    kind: str  # "value" | "redex" | "stuck"
    context: Context = ()
    redex: Optional[Term] = None
    reason: Optional[str] = None


def _is_redex(t: Term, val, ground) -> bool:
    if isinstance(t, App):
        return isinstance(t.fun, Lambda) and val(t.arg)
    if isinstance(t, PrimApp):
        return all(ground(a) for a in t.args)
    if isinstance(t, Fix):
        return isinstance(t.body, Lambda)
    if isinstance(t, IfLeq):
        return ground(t.scrut)
    if isinstance(t, Sample):
        return True
    if isinstance(t, Score):
        return ground(t.arg)
    return False


def _is_const(t: Term) -> bool:
    return isinstance(t, Const)


def decompose(t: Term, symbolic: bool = False) -> Decomposition:
    """Split a closed term into its unique evaluation context and redex.

    With ``symbolic=True``, symbolic values (x_i, a_j, delayed applications)
    count as values, which is the only change the symbolic dialect makes to
    the decomposition discipline.
    """
    val = is_symbolic_value if symbolic else is_value
    ground = is_value_expr if symbolic else _is_const
    ctx: list[Frame] = []
    while True:
        if val(t):
            return Decomposition("value") if not ctx else Decomposition(
                "stuck", tuple(ctx), None, "value in context")
        if _is_redex(t, val, ground):
            return Decomposition("redex", tuple(ctx), t)
        if isinstance(t, Var):
            return Decomposition("stuck", tuple(ctx), None,
                                 f"unbound variable {t.name}")
        if isinstance(t, App):
            if val(t.fun):
                if not isinstance(t.fun, Lambda):
                    return Decomposition("stuck", tuple(ctx), None,
                                         "application of a non-function")
                ctx.append(AppArg(t.fun))
                t = t.arg
            else:
                ctx.append(AppFun(t.arg))
                t = t.fun
        elif isinstance(t, PrimApp):
            i = 0
            while i < len(t.args) and ground(t.args[i]):
                i += 1
            if val(t.args[i]):
                return Decomposition("stuck", tuple(ctx), None,
                                     "abstraction as primitive argument")
            ctx.append(PrimArg(t.prim, t.args[:i], t.args[i + 1:]))
            t = t.args[i]
        elif isinstance(t, Fix):
            if val(t.body):
                return Decomposition("stuck", tuple(ctx), None,
                                     "fix of a non-abstraction value")
            ctx.append(FixBody())
            t = t.body
        elif isinstance(t, IfLeq):
            if val(t.scrut):
                return Decomposition("stuck", tuple(ctx), None,
                                     "abstraction as conditional scrutinee")
            ctx.append(IfScrut(t.then, t.orelse))
            t = t.scrut
        elif isinstance(t, Score):
            if val(t.arg):
                return Decomposition("stuck", tuple(ctx), None,
                                     "abstraction as score argument")
            ctx.append(ScoreArg())
            t = t.arg
        else:
            return Decomposition("stuck", tuple(ctx), None,
                                 f"no rule for {type(t).__name__}")


# ---------------------------------------------------------------------------
# Printer.  parse(pretty(t)) == t for every concrete term produced by the
# parser; symbolic nodes print in a readable but non-source form.

_ADD, _MUL, _UNARY, _APP, _ATOM = 1, 2, 3, 4, 5
_INFIX = {"add": ("+", _ADD), "sub": ("-", _ADD),
          "mul": ("*", _MUL), "div": ("/", _MUL)}


def pretty(t: Term) -> str:
    return _pp(t, 0)


def _paren(s: str, level: int, ctx_level: int) -> str:
    return f"({s})" if level < ctx_level else s


def _pp(t: Term, ctx_level: int) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        s = repr(float(t.value))
        return _paren(s, _UNARY, ctx_level) if t.value < 0 else s
    if isinstance(t, InputVar):
        return f"x{t.index}"
    if isinstance(t, SampleVar):
        return f"a{t.index}"
    if isinstance(t, Sample):
        return "sample"
    if isinstance(t, Score):
        return f"score({_pp(t.arg, 0)})"
    if isinstance(t, Delayed):
        return f"{t.prim}!({', '.join(_pp(a, 0) for a in t.args)})"
    if isinstance(t, PrimApp):
        if t.prim in _INFIX:
            op, lvl = _INFIX[t.prim]
            lhs = _pp(t.args[0], lvl)
            rhs = _pp(t.args[1], lvl + 1)  # left-assoc
            return _paren(f"{lhs} {op} {rhs}", lvl, ctx_level)
        return f"{t.prim}({', '.join(_pp(a, 0) for a in t.args)})"
    if isinstance(t, Lambda):
        if t.param_type is None:
            s = f"fn {t.param} -> {_pp(t.body, 0)}"  # display only
        else:
            s = f"fn ({t.param} : {t.param_type}) -> {_pp(t.body, 0)}"
        return _paren(s, 0, ctx_level)
    if isinstance(t, App):
        if isinstance(t.fun, Lambda) and t.fun.param_type is None:
            s = f"let {t.fun.param} = {_pp(t.arg, 0)} in {_pp(t.fun.body, 0)}"
            return _paren(s, 0, ctx_level)
        s = f"{_pp(t.fun, _APP)} {_pp(t.arg, _ATOM)}"
        return _paren(s, _APP, ctx_level)
    if isinstance(t, Fix):
        # `fix` parses greedily at term level, so parenthesize elsewhere
        return _paren(f"fix ({_pp(t.body, 0)})", 0, ctx_level)
    if isinstance(t, IfLeq):
        s = t.scrut
        if (isinstance(s, PrimApp) and s.prim == "sub"
                and not (isinstance(s.args[1], Const) and s.args[1].value == 0.0)):
            head = f"if {_pp(s.args[0], _ADD)} <= {_pp(s.args[1], _ADD)}"
        else:
            head = f"if {_pp(s, _ADD)} <= 0"
        return _paren(f"{head} then {_pp(t.then, 0)} else {_pp(t.orelse, 0)}",
                      0, ctx_level)
    raise TypeError(f"not a term: {t!r}")


def iter_subterms(t: Term) -> Iterator[Term]:
    """Pre-order traversal of all subterms, t itself included."""
    stack = [t]
    while stack:
        u = stack.pop()
        yield u
        if isinstance(u, Lambda):
            stack.append(u.body)
        elif isinstance(u, App):
            stack.extend((u.arg, u.fun))
        elif isinstance(u, (PrimApp, Delayed)):
            stack.extend(reversed(u.args))
        elif isinstance(u, Fix):
            stack.append(u.body)
        elif isinstance(u, IfLeq):
            stack.extend((u.orelse, u.then, u.scrut))
        elif isinstance(u, Score):
            stack.append(u.arg)
