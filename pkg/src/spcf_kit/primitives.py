"""Registry of primitive functions.

Each primitive is a partial function R^l -> R with an explicit domain
predicate, exact partial derivatives on the domain interior, a vectorized
evaluator for Monte Carlo work, and an optional interval evaluator for
sound region pruning.  Domains are open sets and evaluation never yields
NaN or infinity: anything outside the domain (or overflowing) raises
DomainError, which the interpreter maps to a failed run.

The admissibility contract for the whole set is: closed under composition,
differentiable on domain interiors, and the boundary of each preimage
f^-1[0, inf) is Lebesgue-null.  `class_tag` records why a primitive is
believed to satisfy this: "analytic" (real-analytic on its open domain),
"rect" (piecewise structure with rectangular domain pieces, e.g. div, log,
the uniform density), or "unverified".  `admissibility_probe` offers a
numeric spot-check; it is a heuristic, not a proof.

min/max are deliberately absent: they are not differentiable and are
expressible with conditionals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import intervals as iv
from .intervals import Interval

SQRT_2PI = math.sqrt(2.0 * math.pi)

ANALYTIC = "analytic"
RECT = "rect"
UNVERIFIED = "unverified"


class DomainError(Exception):
    """Arguments outside the primitive's domain (or non-finite result)."""


class BoundaryError(Exception):
    """Gradient queried too close to the domain boundary."""


@dataclass(frozen=True)
class PrimitiveFn:
    name: str
    arity: int
    eval: Callable[..., float]
    partials: tuple[Callable[..., float], ...]
    domain: Callable[..., bool]
    class_tag: str = ANALYTIC
    np_eval: Optional[Callable] = None    # arrays -> (values, valid_mask)
    interval_eval: Optional[Callable[[Sequence[Interval]], Interval]] = None
    domain_total: bool = True
    is_constant: bool = False
    sampling_box: tuple[tuple[float, float], ...] = field(default=())
    domain_rectangles: Optional[str] = None  # human-readable, for rect prims

    def box(self) -> tuple[tuple[float, float], ...]:
        return self.sampling_box or ((-10.0, 10.0),) * self.arity


class Registry:
    """Immutable-after-construction name -> PrimitiveFn table.

    Projections resolve dynamically (``proj<i>of<l>``), so every arity the
    code may compose with is available without pre-registering it.
    """

    def __init__(self, prims: dict[str, PrimitiveFn]):
        self._prims = dict(prims)

    def get(self, name: str) -> Optional[PrimitiveFn]:
        fn = self._prims.get(name)
        if fn is None and name.startswith("proj"):
            try:
                i, l = name[4:].split("of")
                return projection(int(i), int(l))
            except (ValueError, IndexError):
                return None
        return fn

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._prims))

    def arity(self, name: str) -> int:
        fn = self.get(name)
        if fn is None:
            raise KeyError(name)
        return fn.arity


# ---------------------------------------------------------------------------
# Evaluation and differentiation entry points

def eval_prim(p: PrimitiveFn, args: Sequence[float]) -> float:
    if len(args) != p.arity:
        raise DomainError(f"{p.name} takes {p.arity} arguments, got {len(args)}")
    if not all(math.isfinite(a) for a in args):
        raise DomainError(f"{p.name}: non-finite argument")
    if not p.domain(*args):
        raise DomainError(f"{p.name}{tuple(args)} outside domain")
    try:
        out = p.eval(*args)
    except (OverflowError, ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"{p.name}{tuple(args)}: {exc}") from None
    if not math.isfinite(out):
        raise DomainError(f"{p.name}{tuple(args)}: non-finite result")
    return out


def grad_prim(p: PrimitiveFn, args: Sequence[float],
              margin: float = 1e-9) -> tuple[float, ...]:
    """Partials at an interior point; the interior is probed with `margin`."""
    if len(args) != p.arity:
        raise DomainError(f"{p.name} takes {p.arity} arguments, got {len(args)}")
    inside = p.domain(*args)
    if not p.domain_total:
        for i in range(p.arity):
            for d in (-margin, margin):
                probe = list(args)
                probe[i] += d
                if not p.domain(*probe):
                    if inside or _near(p, args, margin):
                        raise BoundaryError(
                            f"{p.name}{tuple(args)}: within {margin} of the "
                            f"domain boundary")
                    raise DomainError(f"{p.name}{tuple(args)} outside domain")
    if not inside:
        raise DomainError(f"{p.name}{tuple(args)} outside domain")
    out = tuple(g(*args) for g in p.partials)
    if not all(math.isfinite(v) for v in out):
        raise DomainError(f"{p.name}{tuple(args)}: non-finite derivative")
    return out


def _near(p: PrimitiveFn, args: Sequence[float], margin: float) -> bool:
    # a point just outside the domain still reports BoundaryError when some
    # perturbation re-enters it (e.g. the gradient of log at exactly 0)
    for i in range(p.arity):
        for d in (-margin, margin):
            probe = list(args)
            probe[i] += d
            if p.domain(*probe):
                return True
    return False


# ---------------------------------------------------------------------------
# Builtin definitions

def _np_total(fn):
    def run(args):
        with np.errstate(all="ignore"):
            vals = fn(*args)
        return vals, np.isfinite(vals)
    return run


def _add(x, y):
    return x + y


def _sub(x, y):
    return x - y


def _mul(x, y):
    return x * y


def _div_np(args):
    x, y = args
    ok = y != 0.0
    with np.errstate(all="ignore"):
        vals = np.where(ok, x / np.where(ok, y, 1.0), np.nan)
    return vals, ok & np.isfinite(vals)


def _log_np(args):
    (x,) = args
    ok = x > 0.0
    with np.errstate(all="ignore"):
        vals = np.where(ok, np.log(np.where(ok, x, 1.0)), np.nan)
    return vals, ok & np.isfinite(vals)


def _sqrt_np(args):
    (x,) = args
    ok = x > 0.0
    with np.errstate(all="ignore"):
        vals = np.where(ok, np.sqrt(np.where(ok, x, 1.0)), np.nan)
    return vals, ok


def _pdfnorm(mean, sd, x):
    z = (x - mean) / sd
    return math.exp(-0.5 * z * z) / (sd * SQRT_2PI)


def _pdfnorm_np(args):
    mean, sd, x = args
    ok = sd > 0.0
    safe_sd = np.where(ok, sd, 1.0)
    with np.errstate(all="ignore"):
        z = (x - mean) / safe_sd
        vals = np.exp(-0.5 * z * z) / (safe_sd * SQRT_2PI)
    return vals, ok & np.isfinite(vals)


def _pdfnorm_iv(args):
    _, sd, _ = args
    if sd.lo > 0:
        return Interval(0.0, 1.0 / (sd.lo * SQRT_2PI), True, False)
    return Interval(0.0, iv.INF, True, True)


def _pdfuniform(a, b, x):
    return 1.0 / (b - a) if a < x < b else 0.0


def _pdfuniform_domain(a, b, x):
    # the jump points x = a, x = b are excluded so the function is
    # differentiable everywhere on its (open) domain
    return a < b and x != a and x != b


def _pdfuniform_np(args):
    a, b, x = args
    ok = (a < b) & (x != a) & (x != b)
    width = np.where(ok, b - a, 1.0)
    vals = np.where((x > a) & (x < b), 1.0 / width, 0.0)
    return vals, ok & np.isfinite(vals)


def _pdfuniform_partials():
    def da(a, b, x):
        return 1.0 / (b - a) ** 2 if a < x < b else 0.0

    def db(a, b, x):
        return -1.0 / (b - a) ** 2 if a < x < b else 0.0

    def dx(a, b, x):
        return 0.0

    return (da, db, dx)


def _exp_scalar(x):
    if x > 709.0:
        raise OverflowError("exp overflow")
    return math.exp(x)


_BUILTINS: dict[str, PrimitiveFn] = {}


def _register(p: PrimitiveFn):
    _BUILTINS[p.name] = p
    return p


_register(PrimitiveFn(
    "add", 2, _add, (lambda x, y: 1.0, lambda x, y: 1.0),
    lambda x, y: True, ANALYTIC, _np_total(np.add),
    lambda a: iv.add(a[0], a[1])))

_register(PrimitiveFn(
    "sub", 2, _sub, (lambda x, y: 1.0, lambda x, y: -1.0),
    lambda x, y: True, ANALYTIC, _np_total(np.subtract),
    lambda a: iv.sub(a[0], a[1])))

_register(PrimitiveFn(
    "mul", 2, _mul, (lambda x, y: y, lambda x, y: x),
    lambda x, y: True, ANALYTIC, _np_total(np.multiply),
    lambda a: iv.mul(a[0], a[1])))

_register(PrimitiveFn(
    "neg", 1, lambda x: -x, (lambda x: -1.0,),
    lambda x: True, ANALYTIC, _np_total(np.negative),
    lambda a: iv.neg(a[0])))

_register(PrimitiveFn(
    "div", 2, lambda x, y: x / y,
    (lambda x, y: 1.0 / y, lambda x, y: -x / (y * y)),
    lambda x, y: y != 0.0, RECT, _div_np,
    lambda a: iv.div(a[0], a[1]), domain_total=False,
    domain_rectangles="R x (-inf,0)  u  R x (0,inf)"))

_register(PrimitiveFn(
    "exp", 1, _exp_scalar, (_exp_scalar,),
    lambda x: True, ANALYTIC, _np_total(np.exp),
    lambda a: iv.exp(a[0])))

_register(PrimitiveFn(
    "log", 1, math.log, (lambda x: 1.0 / x,),
    lambda x: x > 0.0, RECT, _log_np,
    lambda a: iv.log(a[0]), domain_total=False,
    domain_rectangles="(0,inf)"))

_register(PrimitiveFn(
    "sqrt", 1, math.sqrt, (lambda x: 0.5 / math.sqrt(x),),
    lambda x: x > 0.0, RECT, _sqrt_np,
    lambda a: iv.sqrt(a[0]), domain_total=False,
    domain_rectangles="(0,inf)"))

_register(PrimitiveFn(
    "pdfnorm", 3, _pdfnorm,
    (lambda m, s, x: _pdfnorm(m, s, x) * (x - m) / (s * s),
     lambda m, s, x: _pdfnorm(m, s, x) * (((x - m) / s) ** 2 - 1.0) / s,
     lambda m, s, x: -_pdfnorm(m, s, x) * (x - m) / (s * s)),
    lambda m, s, x: s > 0.0, ANALYTIC, _pdfnorm_np, _pdfnorm_iv,
    domain_total=False,
    sampling_box=((-10.0, 10.0), (0.05, 10.0), (-10.0, 10.0))))

_register(PrimitiveFn(
    "pdfuniform", 3, _pdfuniform, _pdfuniform_partials(),
    _pdfuniform_domain, RECT, _pdfuniform_np,
    lambda a: iv.NONNEG, domain_total=False,
    domain_rectangles="{a<b} minus {x=a} and {x=b}",
    sampling_box=((-10.0, 10.0), (-10.0, 10.0), (-10.0, 10.0))))


def constant(value: float, arity: int = 0, name: str | None = None) -> PrimitiveFn:
    """The constant function R^arity -> {value}."""
    v = float(value)

    def np_ev(args):
        n = len(args[0]) if args else 1
        return np.full(n, v), np.ones(n, dtype=bool)

    return PrimitiveFn(
        name or f"const({v!r})", arity, lambda *a: v,
        tuple((lambda *a: 0.0) for _ in range(arity)),
        lambda *a: True, ANALYTIC, np_ev,
        lambda a: iv.point(v), is_constant=True)


def projection(i: int, arity: int) -> PrimitiveFn:
    """proj<i>of<arity>: the i-th coordinate (1-based)."""
    if not 1 <= i <= arity:
        raise ValueError(f"projection index {i} out of range for arity {arity}")
    k = i - 1
    partials = tuple(
        (lambda *a, _j=j: 1.0 if _j == k else 0.0) for j in range(arity))
    return PrimitiveFn(
        f"proj{i}of{arity}", arity, lambda *a: a[k], partials,
        lambda *a: True, ANALYTIC,
        lambda args: (np.asarray(args[k], dtype=float),
                      np.isfinite(np.asarray(args[k], dtype=float))),
        lambda a: a[k])


@lru_cache(maxsize=1)
def builtin_registry() -> Registry:
    return Registry(_BUILTINS)


# ---------------------------------------------------------------------------
# Composition (closure under composition, with the chain rule)

def compose_prims(f: PrimitiveFn, gs: Sequence[PrimitiveFn]) -> PrimitiveFn:
    if len(gs) != f.arity:
        raise ValueError(f"{f.name} takes {f.arity} inner functions, got {len(gs)}")
    if gs and any(g.arity != gs[0].arity for g in gs):
        raise ValueError("inner functions must share one arity")
    m = gs[0].arity if gs else 0
    gs = tuple(gs)

    def domain(*x):
        vals = []
        for g in gs:
            if not g.domain(*x):
                return False
            vals.append(g.eval(*x))
        return f.domain(*vals)

    def ev(*x):
        return f.eval(*(g.eval(*x) for g in gs))

    def partial(j):
        def dj(*x):
            vals = [g.eval(*x) for g in gs]
            outer = [p(*vals) for p in f.partials]
            return sum(outer[i] * gs[i].partials[j](*x) for i in range(len(gs)))
        return dj

    def np_ev(args):
        vals, mask = [], None
        for g in gs:
            v, ok = g.np_eval(args)
            vals.append(v)
            mask = ok if mask is None else (mask & ok)
        v, ok = f.np_eval(vals)
        return v, (ok if mask is None else mask & ok)

    def interval_ev(args):
        if f.interval_eval is None or any(g.interval_eval is None for g in gs):
            return iv.TOP
        return f.interval_eval([g.interval_eval(args) for g in gs])

    if any(g.class_tag == UNVERIFIED for g in gs) or f.class_tag == UNVERIFIED:
        tag = UNVERIFIED
    elif all(g.class_tag == ANALYTIC for g in gs) and f.class_tag == ANALYTIC:
        tag = ANALYTIC
    else:
        tag = RECT
    name = f"{f.name}o({','.join(g.name for g in gs)})"
    both_np = f.np_eval is not None and all(g.np_eval is not None for g in gs)
    return PrimitiveFn(
        name, m, ev, tuple(partial(j) for j in range(m)), domain, tag,
        np_ev if both_np else None, interval_ev,
        domain_total=f.domain_total and all(g.domain_total for g in gs),
        sampling_box=gs[0].sampling_box if gs else ())


# ---------------------------------------------------------------------------
# Admissibility probe

@dataclass(frozen=True)
class ProbeReport:
    name: str
    class_tag: str
    deltas: tuple[float, ...]
    fractions: tuple[float, ...]
    n_in_domain: int
    passed: bool
    heuristic: bool
    note: str


def admissibility_probe(p: PrimitiveFn, n_points: int = 20000,
                        deltas: Sequence[float] = (1e-1, 1e-2, 1e-3),
                        rng_seed: int = 0) -> ProbeReport:
    """Monte Carlo check that the zero set of `p` looks Lebesgue-null.

    Samples the declared box uniformly and measures the fraction of
    in-domain points with |p| <= delta; for a null zero set this shrinks
    roughly linearly in delta.  Heuristic only.
    """
    deltas = tuple(sorted(deltas, reverse=True))
    rng = np.random.default_rng(rng_seed)
    box = p.box()
    if p.arity == 0:
        v = p.eval()
        fracs = tuple(1.0 if abs(v) <= d else 0.0 for d in deltas)
        if v == 0.0:
            return ProbeReport(p.name, p.class_tag, deltas, fracs, n_points,
                               False, True,
                               "exact zero constant: probe saturates, but the "
                               "nonnegativity preimage is everything and has "
                               "empty boundary (admissible)")
        return ProbeReport(p.name, p.class_tag, deltas, fracs, n_points,
                           all(f == 0.0 for f in fracs), True,
                           "nonzero constant")
    cols = [rng.uniform(lo, hi, n_points) for lo, hi in box]
    if p.np_eval is not None:
        vals, ok = p.np_eval(cols)
    else:
        vals = np.empty(n_points)
        ok = np.zeros(n_points, dtype=bool)
        for i in range(n_points):
            a = [c[i] for c in cols]
            if p.domain(*a):
                try:
                    vals[i] = p.eval(*a)
                    ok[i] = math.isfinite(vals[i])
                except (OverflowError, ValueError, ZeroDivisionError):
                    pass
    n_ok = int(ok.sum())
    if n_ok == 0:
        return ProbeReport(p.name, p.class_tag, deltas, (0.0,) * len(deltas),
                           0, False, True, "sampling box misses the domain")
    av = np.abs(vals[ok])
    fracs = tuple(float((av <= d).mean()) for d in deltas)
    floor = 10.0 / n_ok
    ok_decay = True
    for (d0, f0), (d1, f1) in zip(zip(deltas, fracs), zip(deltas[1:], fracs[1:])):
        if f1 > max(4.0 * f0 * (d1 / d0), floor):
            ok_decay = False
    passed = ok_decay and fracs[0] < 0.5
    note = "zero-set fraction decays roughly linearly" if passed else \
        "zero set does not look Lebesgue-null"
    if p.class_tag == UNVERIFIED:
        note += "; primitive is tagged unverified: heuristic only"
    return ProbeReport(p.name, p.class_tag, deltas, fracs, n_ok, passed,
                       True, note)
