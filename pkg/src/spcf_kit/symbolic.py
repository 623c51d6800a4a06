"""Stochastic symbolic execution: branch maps over the trace space.

Instead of drawing samples, symbolic execution substitutes a fresh sampling
variable a_{n+1} for each `sample` and postpones primitive applications whose
arguments mention variables (`Delayed` nodes).  A symbolic configuration is
(term, weight factors, region): the region is the subset of R^m x (0,1)^n of
(inputs, trace prefix) points that follow this control-flow branch, cut out
by sign constraints from conditionals and scores plus domain constraints from
delayed primitives.  Conditionals are the only branching rule, so the
computation tree is finitely branching and terminal regions partition the
terminating traces.

Region emptiness is undecidable in general; the explorer prunes a branch only
when a cheap interval pass proves a constraint unsatisfiable (sound), and
merely flags regions that Monte Carlo membership fails to hit.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import intervals as ivm
from .intervals import Interval
from .parser import TypedProgram
from .primitives import (
    DomainError, Registry, builtin_registry, eval_prim, grad_prim,
)
from .rng import stream
from .syntax import (
    App, Const, Delayed, Fix, IfLeq, InputVar, Lambda, PrimApp, Sample,
    SampleVar, Score, Term, Var, decompose, is_symbolic_value, is_value_expr,
    plug, pretty, subst, unfold_fix,
)

LE0 = "<=0"
GT0 = ">0"
GE0 = ">=0"
INDOM = "dom"

DEFAULT_INPUT_BOX = (-10.0, 10.0)


class Undefined(Exception):
    """A delayed primitive was instantiated outside its domain."""


# ---------------------------------------------------------------------------
# Regions

@dataclass(frozen=True, slots=True)
class Constraint:
    expr: Term  # a ground symbolic value
    rel: str    # LE0 | GT0 | GE0 | INDOM


@dataclass(frozen=True, slots=True)
class Region:
    m: int
    n: int
    constraints: tuple[Constraint, ...] = ()

    def extruded(self) -> "Region":
        """Same constraints, one more sampling dimension."""
        return Region(self.m, self.n + 1, self.constraints)

    def with_constraint(self, c: Constraint) -> "Region":
        return Region(self.m, self.n, self.constraints + (c,))


def eval_value_expr(expr: Term, r: Sequence[float], s: Sequence[float],
                    registry: Optional[Registry] = None) -> Optional[float]:
    """Evaluate a ground symbolic value at a point; None when undefined."""
    reg = registry or builtin_registry()
    try:
        return _eval_expr(expr, r, s, reg)
    except (Undefined, DomainError):
        return None


def _eval_expr(expr: Term, r, s, reg) -> float:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, InputVar):
        return r[expr.index - 1]
    if isinstance(expr, SampleVar):
        return s[expr.index - 1]
    if isinstance(expr, Delayed):
        fn = reg.get(expr.prim)
        if fn is None:
            raise Undefined(f"unknown primitive {expr.prim}")
        args = [_eval_expr(a, r, s, reg) for a in expr.args]
        try:
            return eval_prim(fn, args)
        except DomainError:
            raise Undefined(expr.prim) from None
    raise TypeError(f"not a ground symbolic value: {expr!r}")


def grad_value_expr(expr: Term, r: Sequence[float], s: Sequence[float],
                    registry: Optional[Registry] = None,
                    margin: float = 1e-9) -> tuple[float, np.ndarray]:
    """Forward-mode value and gradient wrt (r_1..r_m, s_1..s_n).

    Raises Undefined outside the domain and BoundaryError within `margin`
    of a primitive's domain boundary.
    """
    reg = registry or builtin_registry()
    m, n = len(r), len(s)

    def go(e: Term) -> tuple[float, np.ndarray]:
        if isinstance(e, Const):
            return e.value, np.zeros(m + n)
        if isinstance(e, InputVar):
            g = np.zeros(m + n)
            g[e.index - 1] = 1.0
            return r[e.index - 1], g
        if isinstance(e, SampleVar):
            g = np.zeros(m + n)
            g[m + e.index - 1] = 1.0
            return s[e.index - 1], g
        if isinstance(e, Delayed):
            fn = reg.get(e.prim)
            if fn is None:
                raise Undefined(f"unknown primitive {e.prim}")
            pairs = [go(a) for a in e.args]
            vals = [v for v, _ in pairs]
            try:
                val = eval_prim(fn, vals)
            except DomainError:
                raise Undefined(e.prim) from None
            parts = grad_prim(fn, vals, margin)  # may raise BoundaryError
            g = np.zeros(m + n)
            for (_, gi), pi in zip(pairs, parts):
                if pi != 0.0:
                    g += pi * gi
            return val, g
        raise TypeError(f"not a ground symbolic value: {e!r}")

    return go(expr)


def eval_expr_batch(expr: Term, R: np.ndarray, S: np.ndarray,
                    registry: Optional[Registry] = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized expression evaluation: (values, defined-mask)."""
    reg = registry or builtin_registry()
    npts = S.shape[0] if S.ndim == 2 else R.shape[0]

    def go(e: Term) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(e, Const):
            return (np.full(npts, e.value), np.ones(npts, dtype=bool))
        if isinstance(e, InputVar):
            col = R[:, e.index - 1]
            return col, np.ones(npts, dtype=bool)
        if isinstance(e, SampleVar):
            col = S[:, e.index - 1]
            return col, np.ones(npts, dtype=bool)
        if isinstance(e, Delayed):
            fn = reg.get(e.prim)
            if fn is None or fn.np_eval is None:
                raise TypeError(f"no vectorized evaluator for {e.prim}")
            vals, ok = [], np.ones(npts, dtype=bool)
            for a in e.args:
                v, o = go(a)
                vals.append(v)
                ok &= o
            v, o = fn.np_eval(vals)
            return v, ok & o
        raise TypeError(f"not a ground symbolic value: {e!r}")

    return go(expr)


def region_contains(reg: Region, r: Sequence[float], s: Sequence[float],
                    registry: Optional[Registry] = None) -> bool:
    """Pointwise membership; False on dimension mismatch or undefinedness."""
    if len(r) != reg.m or len(s) != reg.n:
        return False
    if any(not 0.0 < sj < 1.0 for sj in s):
        return False
    rgs = registry or builtin_registry()
    for c in reg.constraints:
        v = eval_value_expr(c.expr, r, s, rgs)
        if v is None or not _rel_holds(c.rel, v):
            return False
    return True


def _rel_holds(rel: str, v: float) -> bool:
    if rel == LE0:
        return v <= 0.0
    if rel == GT0:
        return v > 0.0
    if rel == GE0:
        return v >= 0.0
    return True  # INDOM: definedness was already checked


def _rel_mask(rel: str, v: np.ndarray) -> np.ndarray:
    if rel == LE0:
        return v <= 0.0
    if rel == GT0:
        return v > 0.0
    if rel == GE0:
        return v >= 0.0
    return np.ones(v.shape, dtype=bool)


def region_contains_batch(reg: Region, R: np.ndarray, S: np.ndarray,
                          registry: Optional[Registry] = None) -> np.ndarray:
    """Vectorized membership mask; points must already have matching dims."""
    npts = S.shape[0] if S.ndim == 2 else R.shape[0]
    member = np.ones(npts, dtype=bool)
    for c in reg.constraints:
        v, ok = eval_expr_batch(c.expr, R, S, registry)
        member &= ok
        if c.rel == LE0:
            member &= v <= 0.0
        elif c.rel == GT0:
            member &= v > 0.0
        elif c.rel == GE0:
            member &= v >= 0.0
    return member


# -- interval pass ----------------------------------------------------------

def expr_interval(expr: Term, m: int, input_box: tuple[float, float],
                  registry: Optional[Registry] = None) -> Optional[Interval]:
    """Sound range over the region's bounding box; None = nowhere defined."""
    reg = registry or builtin_registry()

    def go(e: Term) -> Optional[Interval]:
        if isinstance(e, Const):
            return ivm.point(e.value)
        if isinstance(e, InputVar):
            return Interval(input_box[0], input_box[1])
        if isinstance(e, SampleVar):
            return Interval(0.0, 1.0, True, True)
        if isinstance(e, Delayed):
            fn = reg.get(e.prim)
            if fn is None or fn.interval_eval is None:
                return ivm.TOP
            args = []
            for a in e.args:
                sub_iv = go(a)
                if sub_iv is None:
                    return None
                args.append(sub_iv)
            try:
                return fn.interval_eval(args)
            except ValueError:
                return None  # domain certainly violated
        raise TypeError(f"not a ground symbolic value: {e!r}")

    return go(expr)


def constraint_certainly_empty(c: Constraint, m: int,
                               input_box: tuple[float, float],
                               registry: Optional[Registry] = None) -> bool:
    iv = expr_interval(c.expr, m, input_box, registry)
    if iv is None:
        return True
    if c.rel == LE0:
        return iv.certainly_positive()
    if c.rel == GT0:
        return iv.certainly_nonpositive()
    if c.rel == GE0:
        return iv.certainly_negative()
    return False


# -- sampling and measure ---------------------------------------------------

def _draw_points(reg: Region, k: int, rng, input_box, margin: float = 0.0
                 ) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = input_box
    R = rng.uniform(lo + margin, hi - margin, size=(k, reg.m)) if reg.m else \
        np.zeros((k, 0))
    S = rng.uniform(margin, 1.0 - margin, size=(k, reg.n)) if reg.n else \
        np.zeros((k, 0))
    return R, S


def sample_region_interior(reg: Region, margin: float = 0.02,
                           max_tries: int = 100_000, rng_seed: int = 0,
                           input_box: tuple[float, float] = DEFAULT_INPUT_BOX,
                           registry: Optional[Registry] = None
                           ) -> Optional[tuple[tuple[float, ...], tuple[float, ...]]]:
    """Rejection-sample a point of the region interior.

    Accepted points satisfy every sign constraint with slack >= margin, stay
    `margin` away from the trace-space walls, and keep every constraint
    expression defined under single-coordinate perturbations of size margin.
    Returns None if no point is found within max_tries draws.
    """
    pts = sample_region_interior_many(reg, 1, margin, max_tries, rng_seed,
                                      input_box, registry)
    return pts[0] if pts else None


def sample_region_interior_many(reg: Region, count: int, margin: float = 0.02,
                                max_tries: int = 100_000, rng_seed: int = 0,
                                input_box: tuple[float, float] = DEFAULT_INPUT_BOX,
                                registry: Optional[Registry] = None
                                ) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
    """Up to `count` interior points (fewer when the region is thin/empty)."""
    rgs = registry or builtin_registry()
    rng = stream(rng_seed, "interior")
    batch = 2048
    tried = 0
    found: list[tuple[tuple[float, ...], tuple[float, ...]]] = []
    # degenerate constraints (no variables) hold with zero slack at best;
    # exclude them from the slack test, membership still applies
    while tried < max_tries and len(found) < count:
        k = min(batch, max_tries - tried)
        tried += k
        R, S = _draw_points(reg, k, rng, input_box, margin)
        good = np.ones(k, dtype=bool)
        for c in reg.constraints:
            v, ok = eval_expr_batch(c.expr, R, S, rgs)
            good &= ok
            slack = 0.0 if is_constant_expr(c.expr) else margin
            if c.rel == LE0:
                good &= v <= -slack
            elif c.rel == GT0:
                good &= v >= max(slack, 1e-300)
            elif c.rel == GE0:
                good &= v >= slack
        for i in np.flatnonzero(good):
            r = tuple(float(x) for x in R[i])
            s = tuple(float(x) for x in S[i])
            if _probe_defined(reg, r, s, margin, rgs):
                found.append((r, s))
                if len(found) >= count:
                    break
    return found


def _probe_defined(reg: Region, r, s, margin: float, rgs: Registry) -> bool:
    pts_r, pts_s = [list(r)], [list(s)]
    for i in range(len(r)):
        for d in (-margin, margin):
            rr = list(r)
            rr[i] += d
            pts_r.append(rr)
            pts_s.append(list(s))
    for j in range(len(s)):
        for d in (-margin, margin):
            ss = list(s)
            ss[j] += d
            pts_r.append(list(r))
            pts_s.append(ss)
    for rr, ss in zip(pts_r, pts_s):
        for c in reg.constraints:
            if eval_value_expr(c.expr, rr, ss, rgs) is None:
                return False
    return True


@dataclass(frozen=True)
class MeasureEstimate:
    mean: float
    ci_halfwidth: float
    n_points: int
    boundary_mass: dict[float, float] = field(default_factory=dict)


def estimate_region_measure(reg: Region, n_points: int = 20_000,
                            rng_seed: int = 0,
                            input_box: tuple[float, float] = DEFAULT_INPUT_BOX,
                            boundary_eps: Sequence[float] = (1e-2, 1e-3, 1e-4),
                            registry: Optional[Registry] = None
                            ) -> MeasureEstimate:
    """Monte Carlo volume of the region (restricted to the input box if m>0).

    The companion boundary table reports, for each eps, the mass of the
    uncertainty shell: points inside a version of the region whose sign
    constraints are relaxed by eps but outside the version tightened by eps.
    For a region whose boundary is null this shrinks linearly with eps.
    """
    rgs = registry or builtin_registry()
    rng = stream(rng_seed, "measure")
    R, S = _draw_points(reg, n_points, rng, input_box)
    scale = (input_box[1] - input_box[0]) ** reg.m
    inside = np.ones(n_points, dtype=bool)
    inflated = np.ones(n_points, dtype=bool)
    deflated = {eps: np.ones(n_points, dtype=bool) for eps in boundary_eps}
    inflated_eps = {eps: np.ones(n_points, dtype=bool) for eps in boundary_eps}
    for c in reg.constraints:
        v, ok = eval_expr_batch(c.expr, R, S, rgs)
        inside &= ok
        inflated &= ok
        if c.rel == LE0:
            inside &= v <= 0.0
        elif c.rel == GT0:
            inside &= v > 0.0
        elif c.rel == GE0:
            inside &= v >= 0.0
        # A constraint over a constant expression carves out all-or-nothing
        # and has empty topological boundary: no shell contribution.
        if is_constant_expr(c.expr) or c.rel == INDOM:
            for eps in boundary_eps:
                inflated_eps[eps] &= ok & _rel_mask(c.rel, v)
                deflated[eps] &= ok & _rel_mask(c.rel, v)
            continue
        if c.rel == LE0:
            for eps in boundary_eps:
                inflated_eps[eps] &= ok & (v <= eps)
                deflated[eps] &= ok & (v <= -eps)
        elif c.rel == GT0:
            for eps in boundary_eps:
                inflated_eps[eps] &= ok & (v > -eps)
                deflated[eps] &= ok & (v > eps)
        elif c.rel == GE0:
            for eps in boundary_eps:
                inflated_eps[eps] &= ok & (v >= -eps)
                deflated[eps] &= ok & (v >= eps)
    p = float(inside.mean())
    ci = 1.959963984540054 * math.sqrt(max(p * (1 - p), 1e-12) / n_points)
    boundary = {eps: float((inflated_eps[eps] & ~deflated[eps]).mean()) * scale
                for eps in boundary_eps}
    return MeasureEstimate(p * scale, ci * scale, n_points, boundary)


# ---------------------------------------------------------------------------
# Instantiation: symbolic terms back to concrete terms at a point

def instantiate(term: Term, r: Sequence[float], s: Sequence[float],
                registry: Optional[Registry] = None) -> Optional[Term]:
    """Substitute the point and collapse closed delayed applications.

    Returns None when (r, s) is outside the term's domain, i.e. some delayed
    application (anywhere in the term) lands outside its primitive's domain.
    """
    reg = registry or builtin_registry()
    try:
        return _inst(term, r, s, reg)
    except Undefined:
        return None


def _inst(t: Term, r, s, reg) -> Term:
    if isinstance(t, Const):
        return t
    if isinstance(t, InputVar):
        return Const(float(r[t.index - 1]))
    if isinstance(t, SampleVar):
        return Const(float(s[t.index - 1]))
    if isinstance(t, Delayed):
        fn = reg.get(t.prim)
        if fn is None:
            raise Undefined(t.prim)
        args = []
        for a in t.args:
            ia = _inst(a, r, s, reg)
            if not isinstance(ia, Const):
                raise Undefined("delayed argument is not ground")
            args.append(ia.value)
        try:
            return Const(eval_prim(fn, args))
        except DomainError:
            raise Undefined(t.prim) from None
    if isinstance(t, Var):
        return t
    if isinstance(t, Sample):
        return t
    if isinstance(t, Lambda):
        return Lambda(t.param, t.param_type, _inst(t.body, r, s, reg))
    if isinstance(t, App):
        return App(_inst(t.fun, r, s, reg), _inst(t.arg, r, s, reg))
    if isinstance(t, PrimApp):
        return PrimApp(t.prim, tuple(_inst(a, r, s, reg) for a in t.args))
    if isinstance(t, Fix):
        return Fix(_inst(t.body, r, s, reg))
    if isinstance(t, IfLeq):
        return IfLeq(_inst(t.scrut, r, s, reg), _inst(t.then, r, s, reg),
                     _inst(t.orelse, r, s, reg))
    if isinstance(t, Score):
        return Score(_inst(t.arg, r, s, reg))
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Symbolic configurations and the step relation

@dataclass(frozen=True, slots=True)
class SymbolicConfiguration:
    term: Term
    weight: tuple[Term, ...]  # product of ground symbolic values; () == 1
    region: Region

    def weight_at(self, r: Sequence[float], s: Sequence[float],
                  registry: Optional[Registry] = None) -> Optional[float]:
        w = 1.0
        for f in self.weight:
            v = eval_value_expr(f, r, s, registry)
            if v is None:
                return None
            w *= v
        return w


def is_constant_expr(expr: Term) -> bool:
    """True when the expression mentions no input or sampling variable."""
    if isinstance(expr, (InputVar, SampleVar)):
        return False
    if isinstance(expr, Delayed):
        return all(is_constant_expr(a) for a in expr.args)
    return True


def _tree_has_partial_prim(expr: Term, reg: Registry) -> bool:
    if isinstance(expr, Delayed):
        fn = reg.get(expr.prim)
        if fn is None or not fn.domain_total:
            return True
        return any(_tree_has_partial_prim(a, reg) for a in expr.args)
    return False


def symbolic_step(cfg: SymbolicConfiguration,
                  registry: Optional[Registry] = None
                  ) -> list[tuple[SymbolicConfiguration, Optional[str]]]:
    """Successors of a non-value configuration, with branch labels.

    The conditional is the only two-way rule; its successors carry labels
    "T"/"E".  Successors with syntactically impossible regions are still
    returned; pruning is the explorer's concern.
    """
    reg = registry or builtin_registry()
    d = decompose(cfg.term, symbolic=True)
    if d.kind == "value":
        raise ValueError("configuration already holds a symbolic value")
    if d.kind == "stuck":
        raise RuntimeError(d.reason or "stuck symbolic term")
    rdx = d.redex
    ctx = d.context
    w, U = cfg.weight, cfg.region

    if isinstance(rdx, App):
        lam = rdx.fun
        t = plug(ctx, subst(lam.body, lam.param, rdx.arg))
        return [(SymbolicConfiguration(t, w, U), None)]
    if isinstance(rdx, PrimApp):
        delayed = Delayed(rdx.prim, rdx.args)
        U2 = U
        if _tree_has_partial_prim(delayed, reg):
            U2 = U.with_constraint(Constraint(delayed, INDOM))
        return [(SymbolicConfiguration(plug(ctx, delayed), w, U2), None)]
    if isinstance(rdx, Fix):
        return [(SymbolicConfiguration(plug(ctx, unfold_fix(rdx)), w, U),
                 None)]
    if isinstance(rdx, IfLeq):
        then_cfg = SymbolicConfiguration(
            plug(ctx, rdx.then), w,
            U.with_constraint(Constraint(rdx.scrut, LE0)))
        else_cfg = SymbolicConfiguration(
            plug(ctx, rdx.orelse), w,
            U.with_constraint(Constraint(rdx.scrut, GT0)))
        return [(then_cfg, "T"), (else_cfg, "E")]
    if isinstance(rdx, Sample):
        fresh = SampleVar(U.n + 1)
        return [(SymbolicConfiguration(plug(ctx, fresh), w, U.extruded()),
                 None)]
    if isinstance(rdx, Score):
        v = rdx.arg
        return [(SymbolicConfiguration(
            plug(ctx, v), w + (v,),
            U.with_constraint(Constraint(v, GE0))), None)]
    raise RuntimeError(f"unexpected symbolic redex {rdx!r}")


# ---------------------------------------------------------------------------
# Exploration

TERMINAL = "terminal"
BUDGET_LEAF = "budget"


@dataclass(frozen=True)
class BranchLeaf:
    leaf_id: int
    kind: str  # terminal | budget
    config: SymbolicConfiguration
    path: tuple[str, ...]
    steps: int
    suspected_empty: bool = False

    @property
    def is_lambda_valued(self) -> bool:
        return isinstance(self.config.term, Lambda)


@dataclass(frozen=True)
class StuckRegion:
    step: int
    region: Region
    path: tuple[str, ...]


@dataclass(frozen=True)
class BranchMap:
    program_hash: str
    m: int
    leaves: tuple[BranchLeaf, ...]
    stuck_regions: tuple[StuckRegion, ...]
    input_box: tuple[float, float]
    max_depth: int
    max_leaves: int
    n_pruned_empty: int

    def terminal_leaves(self) -> tuple[BranchLeaf, ...]:
        return tuple(l for l in self.leaves if l.kind == TERMINAL)

    def budget_leaves(self) -> tuple[BranchLeaf, ...]:
        return tuple(l for l in self.leaves if l.kind == BUDGET_LEAF)


def program_hash(prog: TypedProgram) -> str:
    text = pretty(prog.term) + "|" + ",".join(prog.free_vars)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def explore(prog: TypedProgram, max_depth: int = 300, max_leaves: int = 2000,
            prune_samples: int = 64, rng_seed: int = 0,
            input_box: tuple[float, float] = DEFAULT_INPUT_BOX,
            registry: Optional[Registry] = None) -> BranchMap:
    """Breadth-first branch exploration from (program, weight 1, full space).

    Every configuration whose redex is `sample` is also recorded as a
    stuck-region snapshot: its region consists of trace prefixes that demand
    more randomness than they hold.  `max_depth` bounds the number of
    reduction steps per branch; frontier configurations still unresolved at
    the bound become budget leaves.
    """
    reg = registry or builtin_registry()
    term = prog.term
    for i, name in enumerate(prog.free_vars, start=1):
        term = subst(term, name, InputVar(i))
    m = prog.n_inputs
    root = SymbolicConfiguration(term, (), Region(m, 0))

    leaves: list[BranchLeaf] = []
    stuck: list[StuckRegion] = []
    n_pruned = 0
    prune_counter = 0
    overflow = False

    # queue entries: (config, path, steps, suspected_empty)
    queue: list[tuple[SymbolicConfiguration, tuple[str, ...], int, bool]] = \
        [(root, (), 0, False)]
    head = 0
    while head < len(queue):
        cfg, path, steps, flagged = queue[head]
        head += 1
        if is_symbolic_value(cfg.term):
            leaves.append(BranchLeaf(len(leaves), TERMINAL, cfg, path, steps,
                                     flagged))
            continue
        if steps >= max_depth or overflow:
            leaves.append(BranchLeaf(len(leaves), BUDGET_LEAF, cfg, path,
                                     steps, flagged))
            continue
        decomposed = decompose(cfg.term, symbolic=True)
        if decomposed.kind == "redex" and isinstance(decomposed.redex, Sample):
            stuck.append(StuckRegion(steps, cfg.region, path))
        for succ, label in symbolic_step(cfg, reg):
            new_path = path + (label,) if label else path
            sflag = flagged
            if label is not None or len(succ.region.constraints) > len(
                    cfg.region.constraints):
                empty_proved = constraint_certainly_empty(
                    succ.region.constraints[-1], m, input_box, reg)
                hits = _mc_hits(succ.region, prune_samples,
                                stream(rng_seed, "prune", prune_counter),
                                input_box, reg)
                prune_counter += 1
                if empty_proved and hits:
                    raise AssertionError(
                        "interval pass proved an inhabited region empty")
                if empty_proved and hits == 0:
                    n_pruned += 1
                    continue
                if hits == 0:
                    sflag = True
            queue.append((succ, new_path, steps + 1, sflag))
        if len(leaves) + (len(queue) - head) > max_leaves:
            overflow = True
    return BranchMap(program_hash(prog), m, tuple(leaves), tuple(stuck),
                     input_box, max_depth, max_leaves, n_pruned)


def _mc_hits(reg: Region, k: int, rng, input_box, rgs: Registry) -> int:
    if k <= 0:
        return 1
    R, S = _draw_points(reg, k, rng, input_box)
    return int(region_contains_batch(reg, R, S, rgs).sum())


def find_containing_leaves(bm: BranchMap, r: Sequence[float],
                           s: Sequence[float],
                           registry: Optional[Registry] = None
                           ) -> list[BranchLeaf]:
    """Terminal leaves whose region contains the point (dimension-matched)."""
    return [l for l in bm.terminal_leaves()
            if l.config.region.n == len(s)
            and region_contains(l.config.region, r, s, registry)]


# ---------------------------------------------------------------------------
# JSON encoding of branch maps

def expr_to_json(e: Term):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, InputVar):
        return f"x{e.index}"
    if isinstance(e, SampleVar):
        return f"a{e.index}"
    if isinstance(e, Delayed):
        return {"op": e.prim, "args": [expr_to_json(a) for a in e.args]}
    raise TypeError(f"not a ground symbolic value: {e!r}")


def expr_from_json(obj) -> Term:
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    if isinstance(obj, str):
        if obj.startswith("x"):
            return InputVar(int(obj[1:]))
        if obj.startswith("a"):
            return SampleVar(int(obj[1:]))
        raise ValueError(f"bad expression leaf {obj!r}")
    return Delayed(obj["op"], tuple(expr_from_json(a) for a in obj["args"]))


def branch_map_to_json(bm: BranchMap, measures: bool = False,
                       measure_points: int = 4000, rng_seed: int = 0) -> dict:
    leaves = []
    for l in bm.leaves:
        cfg = l.config
        entry = {
            "kind": l.kind,
            "leaf_id": l.leaf_id,
            "m": cfg.region.m,
            "n": cfg.region.n,
            "weight_factors": [expr_to_json(f) for f in cfg.weight],
            "constraints": [{"expr": expr_to_json(c.expr), "rel": c.rel}
                            for c in cfg.region.constraints],
            "path": list(l.path),
            "steps": l.steps,
            "suspected_empty": l.suspected_empty,
        }
        if l.kind == TERMINAL:
            if is_value_expr(cfg.term):
                entry["value_expr"] = expr_to_json(cfg.term)
            else:
                entry["value_kind"] = "lambda"
        if measures and l.kind == TERMINAL:
            est = estimate_region_measure(
                cfg.region, measure_points, rng_seed, bm.input_box)
            entry["measure_est"] = est.mean
        leaves.append(entry)
    return {
        "schema": "spcf-kit/1",
        "program_hash": bm.program_hash,
        "m": bm.m,
        "input_box": list(bm.input_box),
        "max_depth": bm.max_depth,
        "max_leaves": bm.max_leaves,
        "n_pruned_empty": bm.n_pruned_empty,
        "leaves": leaves,
        "stuck_regions": [
            {"step": sr.step, "n": sr.region.n, "path": list(sr.path),
             "constraints": [{"expr": expr_to_json(c.expr), "rel": c.rel}
                             for c in sr.region.constraints]}
            for sr in bm.stuck_regions],
    }
