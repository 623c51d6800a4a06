"""Interval arithmetic with open/closed endpoint tracking.

Used to prove emptiness of branch regions: a constraint `e <= 0` is
unsatisfiable when every possible value of `e` is strictly positive.
Endpoint strictness matters because sampling variables range over the open
interval (0,1): the range of `3 * a1` is (0,3), whose lower bound 0 is never
attained, so `3 * a1 <= 0` is genuinely empty.

All operations over-approximate: the result interval contains every value the
operation can produce on inputs from the argument intervals.  `TOP` (all of
the extended reals) is always a sound fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INF = float("inf")


@dataclass(frozen=True, slots=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __str__(self) -> str:
        l = "(" if self.lo_open else "["
        r = ")" if self.hi_open else "]"
        return f"{l}{self.lo}, {self.hi}{r}"

    # -- order facts used by the region pruner ------------------------------

    def certainly_positive(self) -> bool:
        """Every member is > 0."""
        return self.lo > 0 or (self.lo == 0 and self.lo_open)

    def certainly_nonpositive(self) -> bool:
        """Every member is <= 0."""
        return self.hi <= 0

    def certainly_negative(self) -> bool:
        return self.hi < 0 or (self.hi == 0 and self.hi_open)

    def contains(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and self.lo_open:
            return False
        if x == self.hi and self.hi_open:
            return False
        return True

    def is_point(self) -> bool:
        return self.lo == self.hi and not (self.lo_open or self.hi_open)


TOP = Interval(-INF, INF, True, True)
NONNEG = Interval(0.0, INF, False, True)


def point(x: float) -> Interval:
    return Interval(x, x)


def add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi,
                    a.lo_open or b.lo_open, a.hi_open or b.hi_open)


def neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo, a.hi_open, a.lo_open)


def sub(a: Interval, b: Interval) -> Interval:
    return add(a, neg(b))


def _prod(x: float, y: float) -> float:
    # inf * 0 is 0 for bound purposes
    if x == 0 or y == 0:
        return 0.0
    return x * y


def mul(a: Interval, b: Interval) -> Interval:
    cands = [(_prod(a.lo, b.lo), a.lo_open or b.lo_open),
             (_prod(a.lo, b.hi), a.lo_open or b.hi_open),
             (_prod(a.hi, b.lo), a.hi_open or b.lo_open),
             (_prod(a.hi, b.hi), a.hi_open or b.hi_open)]
    lo = min(v for v, _ in cands)
    hi = max(v for v, _ in cands)
    lo_open = all(o for v, o in cands if v == lo)
    hi_open = all(o for v, o in cands if v == hi)
    # 0 is attained whenever either factor attains 0, regardless of endpoints
    if lo == 0.0 and _attains_zero(a, b):
        lo_open = False
    if hi == 0.0 and _attains_zero(a, b):
        hi_open = False
    return Interval(lo, hi, lo_open, hi_open)


def _attains_zero(a: Interval, b: Interval) -> bool:
    return a.contains(0.0) or b.contains(0.0)


def div(a: Interval, b: Interval) -> Interval:
    if b.contains(0.0) or (b.lo < 0.0 < b.hi):
        return TOP
    if b.lo == 0.0:  # b is (0, hi]: 1/b spans [1/hi, +inf)
        inv = Interval(_safe_inv(b.hi), INF, b.hi_open, True)
    elif b.hi == 0.0:
        inv = Interval(-INF, _safe_inv(b.lo), True, b.lo_open)
    else:
        inv = Interval(min(_safe_inv(b.lo), _safe_inv(b.hi)),
                       max(_safe_inv(b.lo), _safe_inv(b.hi)),
                       b.hi_open if b.lo > 0 else b.lo_open,
                       b.lo_open if b.lo > 0 else b.hi_open)
    return mul(a, inv)


def _safe_inv(x: float) -> float:
    if x == 0:
        return INF
    if math.isinf(x):
        return 0.0
    return 1.0 / x


def _monotone(fn, a: Interval, lo_val=None, hi_val=None) -> Interval:
    lo = fn(a.lo) if lo_val is None else lo_val
    hi = fn(a.hi) if hi_val is None else hi_val
    return Interval(lo, hi, a.lo_open, a.hi_open)


def exp(a: Interval) -> Interval:
    lo = 0.0 if a.lo == -INF else math.exp(min(a.lo, 709.0))
    hi = INF if a.hi >= 709.0 else math.exp(a.hi)
    return Interval(lo, hi, a.lo_open or a.lo == -INF, a.hi_open or a.hi >= 709.0)


def log(a: Interval) -> Interval:
    # restricted to the domain x > 0
    if a.hi <= 0:
        raise ValueError("log of a nonpositive interval")
    lo = -INF if a.lo <= 0 else math.log(a.lo)
    hi = INF if a.hi == INF else math.log(a.hi)
    return Interval(lo, hi, a.lo_open or a.lo <= 0, a.hi_open or a.hi == INF)


def sqrt(a: Interval) -> Interval:
    if a.hi <= 0:
        raise ValueError("sqrt of a nonpositive interval")
    lo = 0.0 if a.lo <= 0 else math.sqrt(a.lo)
    hi = INF if a.hi == INF else math.sqrt(a.hi)
    return Interval(lo, hi, a.lo_open or a.lo <= 0, a.hi_open or a.hi == INF)
