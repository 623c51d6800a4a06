"""Interval arithmetic with endpoint strictness."""

import pytest

from spcf_kit.intervals import Interval, TOP, add, div, exp, log, mul, neg, point, sqrt, sub


def test_scaling_an_open_interval_keeps_strict_zero():
    # 3 * (0,1) = (0,3): 0 is not attained, so <= 0 is impossible
    out = mul(Interval(0.0, 1.0, True, True), point(3.0))
    assert out.lo == 0.0 and out.lo_open
    assert out.hi == 3.0 and out.hi_open
    assert out.certainly_positive()


def test_zero_attained_when_a_factor_attains_zero():
    out = mul(Interval(0.0, 1.0, False, True), point(3.0))
    assert out.lo == 0.0 and not out.lo_open
    assert not out.certainly_positive()


def test_sub_openness_propagates():
    a = Interval(0.0, 1.0, True, True)
    out = sub(a, point(0.5))
    assert (out.lo, out.hi) == (-0.5, 0.5)
    assert out.lo_open and out.hi_open


def test_neg_swaps_endpoints():
    out = neg(Interval(-2.0, 3.0, True, False))
    assert (out.lo, out.hi) == (-3.0, 2.0)
    assert not out.lo_open and out.hi_open


def test_mul_sign_cases():
    out = mul(Interval(-2.0, 3.0), Interval(-1.0, 4.0))
    assert (out.lo, out.hi) == (-8.0, 12.0)


def test_div_by_interval_containing_zero_is_top():
    assert div(point(1.0), Interval(-1.0, 1.0)) == TOP


def test_div_by_positive_interval():
    out = div(point(1.0), Interval(2.0, 4.0))
    assert out.lo == pytest.approx(0.25)
    assert out.hi == pytest.approx(0.5)


def test_monotone_functions():
    e = exp(Interval(0.0, 1.0, True, False))
    assert e.lo == 1.0 and e.lo_open
    l = log(Interval(0.0, 1.0, True, True))
    assert l.lo == float("-inf") and l.hi == 0.0 and l.hi_open
    s = sqrt(Interval(4.0, 9.0))
    assert (s.lo, s.hi) == (2.0, 3.0)


def test_order_facts():
    assert Interval(0.0, 1.0, True, False).certainly_positive()
    assert not Interval(0.0, 1.0, False, False).certainly_positive()
    assert Interval(-1.0, 0.0).certainly_nonpositive()
    assert Interval(-1.0, 0.0, False, True).certainly_negative()
    assert not Interval(-1.0, 0.0, False, False).certainly_negative()


def test_contains_respects_strictness():
    iv = Interval(0.0, 1.0, True, False)
    assert not iv.contains(0.0)
    assert iv.contains(1.0)
    assert iv.contains(0.5)


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)
