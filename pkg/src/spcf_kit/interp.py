"""Concrete small-step interpreter: replay, sampling runs, and estimators.

A configuration is a triple (term, weight, trace).  One reduction step either
contracts the unique redex inside its evaluation context or aborts the run:
scoring with a negative number and applying a primitive outside its domain
both fail.  `sample` appends a fresh uniform draw from (0,1) to the trace and
leaves the weight unchanged; `score(r)` multiplies the weight by r >= 0.

The trace density of a program assigns to (inputs, trace) the final weight of
the replayed run if it terminates consuming the trace exactly, and 0
otherwise; the value function likewise returns the final value or None.  A
trace that is too short leaves the run stuck waiting at a sample; a trace
with unconsumed entries maps to weight 0 / value None.

`step` is a direct, decompose-and-plug reference of the reduction relation;
the run loop below maintains the evaluation context incrementally and
performs the same contractions in the same order.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from .parser import TypedProgram
from .primitives import DomainError, PrimitiveFn, Registry, builtin_registry, eval_prim
from .rng import open_unit, stream, worker_count
from .syntax import (
    App, Const, Fix, IfLeq, Lambda, PrimApp, Sample, Score, Term, Var,
    decompose, plug, subst, unfold_fix,
)

logger = logging.getLogger("spcf_kit")

DEFAULT_STEP_BUDGET = 1_000_000

TERMINATED = "terminated"
FAILED = "failed"
STUCK = "stuck"
BUDGET = "budget"

NEGATIVE_SCORE = "NegativeScore"
PRIM_DOMAIN = "PrimDomain"


@dataclass(frozen=True, slots=True)
class Configuration:
    term: Term
    weight: float = 1.0
    trace: tuple[float, ...] = ()


@dataclass(frozen=True, slots=True)
class StepFail:
    reason: str


@dataclass(frozen=True, slots=True)
class RunResult:
    outcome: str                      # terminated | failed | stuck | budget
    value: Optional[Term]             # Const or Lambda when terminated
    weight: float
    trace: tuple[float, ...]          # samples actually consumed/drawn
    steps: int
    reason: Optional[str] = None      # NegativeScore | PrimDomain on failure
    branch_choices: tuple[bool, ...] = ()
    score_factors: tuple[float, ...] = ()
    unconsumed: int = 0               # replay only: trailing unused entries

    @property
    def exact(self) -> bool:
        return self.outcome == TERMINATED and self.unconsumed == 0

    def value_float(self) -> Optional[float]:
        if isinstance(self.value, Const):
            return self.value.value
        return None


class SpcfRuntimeError(Exception):
    """An ill-formed configuration reached the machine (type-checker bypass)."""


# ---------------------------------------------------------------------------
# Single reference step

def step(cfg: Configuration, next_sample: Optional[float] = None,
         registry: Optional[Registry] = None) -> Union[Configuration, StepFail]:
    """One reduction of the unique redex; `next_sample` feeds a sample redex."""
    reg = registry or builtin_registry()
    d = decompose(cfg.term)
    if d.kind == "value":
        raise ValueError("configuration already holds a value")
    if d.kind == "stuck":
        raise SpcfRuntimeError(d.reason or "stuck term")
    r = d.redex
    w, tr = cfg.weight, cfg.trace
    if isinstance(r, App):
        lam = r.fun
        return Configuration(plug(d.context, subst(lam.body, lam.param, r.arg)), w, tr)
    if isinstance(r, PrimApp):
        fn = reg.get(r.prim)
        if fn is None:
            raise SpcfRuntimeError(f"unknown primitive {r.prim}")
        try:
            out = eval_prim(fn, [a.value for a in r.args])
        except DomainError:
            return StepFail(PRIM_DOMAIN)
        return Configuration(plug(d.context, Const(out)), w, tr)
    if isinstance(r, Fix):
        return Configuration(plug(d.context, unfold_fix(r)), w, tr)
    if isinstance(r, IfLeq):
        branch = r.then if r.scrut.value <= 0 else r.orelse
        return Configuration(plug(d.context, branch), w, tr)
    if isinstance(r, Sample):
        if next_sample is None or not 0.0 < next_sample < 1.0:
            raise ValueError("sample redex needs next_sample in (0,1)")
        return Configuration(plug(d.context, Const(next_sample)), w, tr + (next_sample,))
    if isinstance(r, Score):
        v = r.arg.value
        if v < 0:
            return StepFail(NEGATIVE_SCORE)
        return Configuration(plug(d.context, Const(v)), v * w, tr)
    raise SpcfRuntimeError(f"unexpected redex {r!r}")


# ---------------------------------------------------------------------------
# Run loop (incremental evaluation context)

_F_APPFUN, _F_APPARG, _F_PRIM, _F_FIX, _F_IF, _F_SCORE = range(6)


def _run_machine(term: Term, source: Callable[[], Optional[float]],
                 step_budget: int, reg: Registry,
                 weight: float = 1.0) -> RunResult:
    steps = 0
    trace: list[float] = []
    factors: list[float] = []
    choices: list[bool] = []
    stack: list = []
    prims: dict[str, PrimitiveFn] = {}
    t = term

    def budget() -> RunResult:
        return RunResult(BUDGET, None, weight, tuple(trace), steps,
                         branch_choices=tuple(choices),
                         score_factors=tuple(factors))

    while True:
        tt = type(t)
        if tt is Const or tt is Lambda:
            if not stack:
                return RunResult(TERMINATED, t, weight, tuple(trace), steps,
                                 branch_choices=tuple(choices),
                                 score_factors=tuple(factors))
            fr = stack.pop()
            tag = fr[0]
            if tag is _F_APPFUN:
                if tt is not Lambda:
                    raise SpcfRuntimeError("application of a non-function")
                arg = fr[1]
                ta = type(arg)
                if ta is Const or ta is Lambda:
                    if steps >= step_budget:
                        return budget()
                    steps += 1
                    t = subst(t.body, t.param, arg)
                else:
                    stack.append((_F_APPARG, t))
                    t = arg
            elif tag is _F_APPARG:
                lam = fr[1]
                if steps >= step_budget:
                    return budget()
                steps += 1
                t = subst(lam.body, lam.param, t)
            elif tag is _F_PRIM:
                if tt is not Const:
                    raise SpcfRuntimeError("abstraction as primitive argument")
                _, name, vals, args, i = fr
                vals.append(t.value)
                if i < len(args):
                    stack.append((_F_PRIM, name, vals, args, i + 1))
                    t = args[i]
                else:
                    if steps >= step_budget:
                        return budget()
                    steps += 1
                    fn = prims.get(name)
                    if fn is None:
                        fn = reg.get(name)
                        if fn is None:
                            raise SpcfRuntimeError(f"unknown primitive {name}")
                        prims[name] = fn
                    try:
                        t = Const(eval_prim(fn, vals))
                    except DomainError:
                        return RunResult(FAILED, None, weight, tuple(trace),
                                         steps, PRIM_DOMAIN,
                                         tuple(choices), tuple(factors))
            elif tag is _F_FIX:
                if tt is not Lambda:
                    raise SpcfRuntimeError("fix of a non-abstraction")
                if steps >= step_budget:
                    return budget()
                steps += 1
                t = unfold_fix(Fix(t))
            elif tag is _F_IF:
                if tt is not Const:
                    raise SpcfRuntimeError("abstraction as scrutinee")
                if steps >= step_budget:
                    return budget()
                steps += 1
                took_then = t.value <= 0.0
                choices.append(took_then)
                t = fr[1] if took_then else fr[2]
            else:  # _F_SCORE
                if tt is not Const:
                    raise SpcfRuntimeError("abstraction as score argument")
                if steps >= step_budget:
                    return budget()
                steps += 1
                v = t.value
                if v < 0:
                    return RunResult(FAILED, None, weight, tuple(trace),
                                     steps, NEGATIVE_SCORE,
                                     tuple(choices), tuple(factors))
                weight *= v
                factors.append(v)
                # t stays Const(v): score returns its argument
        elif tt is App:
            f = t.fun
            if type(f) is Lambda:
                arg = t.arg
                ta = type(arg)
                if ta is Const or ta is Lambda:
                    if steps >= step_budget:
                        return budget()
                    steps += 1
                    t = subst(f.body, f.param, arg)
                else:
                    stack.append((_F_APPARG, f))
                    t = arg
            else:
                stack.append((_F_APPFUN, t.arg))
                t = f
        elif tt is PrimApp:
            args = t.args
            vals: list[float] = []
            i = 0
            for a in args:
                if type(a) is Const:
                    vals.append(a.value)
                    i += 1
                else:
                    break
            if i == len(args):
                if steps >= step_budget:
                    return budget()
                steps += 1
                fn = prims.get(t.prim)
                if fn is None:
                    fn = reg.get(t.prim)
                    if fn is None:
                        raise SpcfRuntimeError(f"unknown primitive {t.prim}")
                    prims[t.prim] = fn
                try:
                    t = Const(eval_prim(fn, vals))
                except DomainError:
                    return RunResult(FAILED, None, weight, tuple(trace),
                                     steps, PRIM_DOMAIN,
                                     tuple(choices), tuple(factors))
            else:
                stack.append((_F_PRIM, t.prim, vals, args, i + 1))
                t = args[i]
        elif tt is Fix:
            b = t.body
            if type(b) is Lambda:
                if steps >= step_budget:
                    return budget()
                steps += 1
                t = unfold_fix(t)
            elif type(b) is Const:
                raise SpcfRuntimeError("fix of a non-abstraction")
            else:
                stack.append((_F_FIX,))
                t = b
        elif tt is IfLeq:
            s = t.scrut
            if type(s) is Const:
                if steps >= step_budget:
                    return budget()
                steps += 1
                took_then = s.value <= 0.0
                choices.append(took_then)
                t = t.then if took_then else t.orelse
            else:
                stack.append((_F_IF, t.then, t.orelse))
                t = s
        elif tt is Sample:
            r = source()
            if r is None:
                return RunResult(STUCK, None, weight, tuple(trace), steps,
                                 branch_choices=tuple(choices),
                                 score_factors=tuple(factors))
            if steps >= step_budget:
                return budget()
            steps += 1
            trace.append(r)
            t = Const(r)
        elif tt is Score:
            a = t.arg
            if type(a) is Const:
                if steps >= step_budget:
                    return budget()
                steps += 1
                v = a.value
                if v < 0:
                    return RunResult(FAILED, None, weight, tuple(trace),
                                     steps, NEGATIVE_SCORE,
                                     tuple(choices), tuple(factors))
                weight *= v
                factors.append(v)
                t = a
            else:
                stack.append((_F_SCORE,))
                t = a
        elif tt is Var:
            raise SpcfRuntimeError(f"unbound variable {t.name}")
        else:
            raise SpcfRuntimeError(
                f"symbolic node {tt.__name__} in a concrete run")


def substitute_inputs(prog: TypedProgram, inputs: Sequence[float]) -> Term:
    if len(inputs) != prog.n_inputs:
        raise ValueError(
            f"program takes {prog.n_inputs} inputs, got {len(inputs)}")
    t = prog.term
    for name, val in zip(prog.free_vars, inputs):
        if not math.isfinite(val):
            raise ValueError("inputs must be finite")
        t = subst(t, name, Const(float(val)))
    return t


# ---------------------------------------------------------------------------
# Replay and sampling runs

def replay(prog: TypedProgram, inputs: Sequence[float],
           trace: Sequence[float], step_budget: int = DEFAULT_STEP_BUDGET,
           registry: Optional[Registry] = None) -> RunResult:
    """Deterministic run consuming `trace` left to right."""
    for s in trace:
        if not 0.0 < s < 1.0:
            raise ValueError("trace entries must lie in the open interval (0,1)")
    reg = registry or builtin_registry()
    term = substitute_inputs(prog, inputs)
    entries = list(trace)
    pos = 0

    def source() -> Optional[float]:
        nonlocal pos
        if pos >= len(entries):
            return None
        pos += 1
        return entries[pos - 1]

    out = _run_machine(term, source, step_budget, reg)
    unconsumed = len(entries) - pos
    if out.outcome == TERMINATED and unconsumed:
        out = RunResult(out.outcome, out.value, out.weight, out.trace,
                        out.steps, out.reason, out.branch_choices,
                        out.score_factors, unconsumed)
    return out


def run_sampling(prog: TypedProgram, inputs: Sequence[float] = (),
                 rng_seed: int = 0, step_budget: int = DEFAULT_STEP_BUDGET,
                 registry: Optional[Registry] = None) -> RunResult:
    """Seeded run drawing i.i.d. uniforms; the full trace is recorded."""
    rng = stream(rng_seed, "run")
    return run_with_rng(prog, inputs, rng, step_budget, registry)


def run_with_rng(prog: TypedProgram, inputs: Sequence[float],
                 rng, step_budget: int = DEFAULT_STEP_BUDGET,
                 registry: Optional[Registry] = None) -> RunResult:
    reg = registry or builtin_registry()
    term = substitute_inputs(prog, inputs)
    return _run_machine(term, lambda: open_unit(rng), step_budget, reg)


def weight_of(prog: TypedProgram, inputs: Sequence[float],
              trace: Sequence[float],
              step_budget: int = DEFAULT_STEP_BUDGET) -> float:
    """Trace density: final weight on exact termination, 0 otherwise."""
    out = replay(prog, inputs, trace, step_budget)
    if out.outcome == BUDGET:
        logger.warning("weight_of: step budget exhausted; reporting 0")
    return out.weight if out.exact else 0.0


def value_of(prog: TypedProgram, inputs: Sequence[float],
             trace: Sequence[float],
             step_budget: int = DEFAULT_STEP_BUDGET) -> Optional[Term]:
    """Value function: final value on exact termination, None otherwise."""
    out = replay(prog, inputs, trace, step_budget)
    if out.outcome == BUDGET:
        logger.warning("value_of: step budget exhausted; reporting None")
    return out.value if out.exact else None


# ---------------------------------------------------------------------------
# Monte Carlo estimators

@dataclass(frozen=True)
class TerminationReport:
    n_runs: int
    n_terminated: int
    n_failed: int
    n_budget: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    ci_halfwidth: float
    mean_trace_len: float   # over terminated runs
    mean_steps: float


def wilson_interval(k: int, n: int, z: float = 1.959963984540054
                    ) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _termination_chunk(task) -> tuple[int, int, int, float, float]:
    prog, inputs, seed, budget, start, stop = task
    n_term = n_fail = n_budget = 0
    tracelen = 0.0
    steps = 0.0
    for i in range(start, stop):
        rng = stream(seed, "estimate", i)
        out = run_with_rng(prog, inputs, rng, budget)
        steps += out.steps
        if out.outcome == TERMINATED:
            n_term += 1
            tracelen += len(out.trace)
        elif out.outcome == FAILED:
            n_fail += 1
        elif out.outcome == BUDGET:
            n_budget += 1
    return n_term, n_fail, n_budget, tracelen, steps


def estimate_termination(prog: TypedProgram, inputs: Sequence[float] = (),
                         n_runs: int = 10_000,
                         step_budget: int = DEFAULT_STEP_BUDGET,
                         rng_seed: int = 0,
                         workers: Optional[int] = None) -> TerminationReport:
    """Fraction of seeded runs that reach a value within the step budget.

    Budget-exceeded runs count as non-terminating (conservative).  Each run
    draws from its own (seed, index) stream, so the estimate does not depend
    on the worker count.
    """
    w = worker_count(workers)
    n_chunks = max(1, min(w * 4, n_runs))
    bounds = [((i * n_runs) // n_chunks, ((i + 1) * n_runs) // n_chunks)
              for i in range(n_chunks)]
    tasks = [(prog, tuple(inputs), rng_seed, step_budget, a, b)
             for a, b in bounds if b > a]
    if w > 1 and n_runs >= 64:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(w) as pool:
            parts = pool.map(_termination_chunk, tasks)
    else:
        parts = [_termination_chunk(t) for t in tasks]
    n_term = sum(p[0] for p in parts)
    n_fail = sum(p[1] for p in parts)
    n_budget = sum(p[2] for p in parts)
    tracelen = sum(p[3] for p in parts)
    steps = sum(p[4] for p in parts)
    lo, hi = wilson_interval(n_term, n_runs)
    return TerminationReport(
        n_runs, n_term, n_fail, n_budget,
        n_term / n_runs if n_runs else 0.0, lo, hi, (hi - lo) / 2,
        tracelen / n_term if n_term else float("nan"),
        steps / n_runs if n_runs else 0.0)


def estimate_value_measure(prog: TypedProgram,
                           predicate: Callable[[float], bool],
                           n_runs: int = 10_000, rng_seed: int = 0,
                           step_budget: int = DEFAULT_STEP_BUDGET) -> float:
    """Monte Carlo estimate of the measure the program assigns to a value set.

    Each terminated run contributes its weight times the indicator of its
    value; non-terminating and failed runs contribute 0.
    """
    total = 0.0
    for i in range(n_runs):
        rng = stream(rng_seed, "estimate", i)
        out = run_with_rng(prog, (), rng, step_budget)
        if out.outcome == TERMINATED:
            v = out.value_float()
            if v is not None and predicate(v):
                total += out.weight
    return total / n_runs if n_runs else 0.0
