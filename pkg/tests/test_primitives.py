"""Primitive registry: evaluation, derivatives, composition, admissibility."""

import math

import numpy as np
import pytest

from spcf_kit.primitives import (
    ANALYTIC, BoundaryError, DomainError, RECT, UNVERIFIED, PrimitiveFn,
    admissibility_probe, builtin_registry, compose_prims, constant, eval_prim,
    grad_prim, projection,
)

REG = builtin_registry()


def fd_grad(fn: PrimitiveFn, args, h=1e-6):
    out = []
    for i in range(fn.arity):
        hi = list(args)
        lo = list(args)
        hi[i] += h
        lo[i] -= h
        out.append((fn.eval(*hi) - fn.eval(*lo)) / (2 * h))
    return out


class TestEval:
    def test_gaussian_density_matches_reduction_weight(self):
        # weight 0.54 of the worked reduction pins down sd (not variance) 0.1
        v = eval_prim(REG.get("pdfnorm"), [1.1, 0.1, 0.9])
        assert v == pytest.approx(0.5399096651318806, rel=1e-12)
        assert abs(v - 0.54) < 0.005

    def test_projection(self):
        assert eval_prim(projection(2, 2), [7.0, 3.0]) == 3.0
        assert eval_prim(REG.get("proj2of2"), [7.0, 3.0]) == 3.0

    def test_log_outside_domain(self):
        with pytest.raises(DomainError):
            eval_prim(REG.get("log"), [-1.0])

    def test_div_by_zero(self):
        with pytest.raises(DomainError):
            eval_prim(REG.get("div"), [1.0, 0.0])

    def test_mul(self):
        assert eval_prim(REG.get("mul"), [0.2, 3.0]) == pytest.approx(0.6)

    def test_exp(self):
        assert eval_prim(REG.get("exp"), [0.0]) == 1.0

    def test_overflow_is_a_domain_error(self):
        with pytest.raises(DomainError):
            eval_prim(REG.get("exp"), [1000.0])

    def test_nonfinite_argument_rejected(self):
        with pytest.raises(DomainError):
            eval_prim(REG.get("add"), [float("nan"), 1.0])

    def test_uniform_density(self):
        f = REG.get("pdfuniform")
        assert eval_prim(f, [0.0, 2.0, 1.0]) == 0.5
        assert eval_prim(f, [0.0, 2.0, 3.0]) == 0.0
        with pytest.raises(DomainError):
            eval_prim(f, [2.0, 0.0, 1.0])  # needs a < b
        with pytest.raises(DomainError):
            eval_prim(f, [0.0, 2.0, 2.0])  # jump point excluded


class TestGrad:
    def test_product_rule(self):
        assert grad_prim(REG.get("mul"), [0.2, 3.0]) == (3.0, 0.2)

    def test_gaussian_wrt_x(self):
        fn = REG.get("pdfnorm")
        g = grad_prim(fn, [1.1, 0.1, 0.9])
        fd = fd_grad(fn, [1.1, 0.1, 0.9])
        assert g[2] == pytest.approx(10.798193302637611, rel=1e-9)
        for a, b in zip(g, fd):
            assert a == pytest.approx(b, rel=1e-4)

    def test_log_at_zero_is_boundary(self):
        with pytest.raises(BoundaryError):
            grad_prim(REG.get("log"), [0.0])

    def test_log_deep_outside_is_domain(self):
        with pytest.raises(DomainError):
            grad_prim(REG.get("log"), [-5.0])

    def test_margin_probe(self):
        with pytest.raises(BoundaryError):
            grad_prim(REG.get("log"), [1e-12], margin=1e-9)
        assert grad_prim(REG.get("log"), [0.5]) == (2.0,)

    def test_all_builtins_match_finite_differences(self):
        rng = np.random.default_rng(0)
        for name in REG.names():
            fn = REG.get(name)
            checked = 0
            tries = 0
            while checked < 100 and tries < 2000:
                tries += 1
                args = [rng.uniform(lo, hi) for lo, hi in fn.box()]
                if not fn.domain(*args):
                    continue
                if name == "pdfuniform":
                    a, b, x = args
                    # keep the stencil away from the density's jump points
                    if min(abs(x - a), abs(x - b)) < 1e-3 or b - a < 1e-2:
                        continue
                if name == "div" and abs(args[1]) < 1e-3:
                    continue
                try:
                    g = grad_prim(fn, args)
                    fd = fd_grad(fn, args)
                except (DomainError, BoundaryError, OverflowError):
                    continue
                for gi, fdi in zip(g, fd):
                    assert abs(gi - fdi) / max(1.0, abs(fdi)) < 1e-4, \
                        (name, args)
                checked += 1
            assert checked == 100, name


class TestCompose:
    def test_doubling_via_projections(self):
        f = compose_prims(REG.get("add"),
                          [projection(1, 1), projection(1, 1)])
        assert eval_prim(f, [3.0]) == 6.0

    def test_domain_threads_through(self):
        f = compose_prims(REG.get("log"), [REG.get("sub")])
        with pytest.raises(DomainError):
            eval_prim(f, [1.0, 1.0])  # log 0
        assert eval_prim(f, [math.e + 1.0, 1.0]) == pytest.approx(1.0)

    def test_chain_rule(self):
        f = compose_prims(REG.get("exp"), [REG.get("neg")])
        (g,) = grad_prim(f, [2.0])
        assert g == pytest.approx(-math.exp(-2.0), rel=1e-9)
        (fd,) = fd_grad(f, [2.0])
        assert g == pytest.approx(fd, rel=1e-4)

    def test_composition_with_projections_is_identity(self):
        rng = np.random.default_rng(1)
        for name in ("add", "mul", "pdfnorm"):
            fn = REG.get(name)
            comp = compose_prims(
                fn, [projection(i + 1, fn.arity) for i in range(fn.arity)])
            for _ in range(100):
                args = [rng.uniform(lo, hi) for lo, hi in fn.box()]
                if not fn.domain(*args):
                    continue
                assert eval_prim(comp, args) == eval_prim(fn, args)

    def test_arity_mismatch(self):
        with pytest.raises(ValueError):
            compose_prims(REG.get("add"), [projection(1, 1)])
        with pytest.raises(ValueError):
            compose_prims(REG.get("add"), [projection(1, 1), projection(1, 2)])

    def test_class_tag_merge(self):
        analytic = compose_prims(REG.get("exp"), [REG.get("add")])
        assert analytic.class_tag == ANALYTIC
        partial = compose_prims(REG.get("log"), [REG.get("add")])
        assert partial.class_tag == RECT

    def test_constant_arity(self):
        c = constant(2.5, arity=2)
        assert eval_prim(c, [9.0, 9.0]) == 2.5
        assert grad_prim(c, [9.0, 9.0]) == (0.0, 0.0)


class TestProbe:
    def test_identity_fraction_matches_exact_oracle(self):
        # |x| <= d on (-10,10) has exact probability 2d/20 = d/10
        rep = admissibility_probe(projection(1, 1), n_points=200_000,
                                  deltas=(0.1, 0.01), rng_seed=2)
        assert rep.passed
        assert rep.fractions[0] == pytest.approx(0.01, rel=0.15)
        assert rep.fractions[1] == pytest.approx(0.001, rel=0.3)

    def test_zero_constant_flagged_specially(self):
        rep = admissibility_probe(constant(0.0), rng_seed=0)
        assert not rep.passed
        assert rep.fractions == (1.0, 1.0, 1.0)
        assert "admissible" in rep.note

    def test_nonzero_constant_passes(self):
        rep = admissibility_probe(constant(3.0), rng_seed=0)
        assert rep.passed

    def test_shifted_gaussian_crossing_passes(self):
        # f(x) = pdfnorm(0, 0.5, x) - 0.5 has two simple roots; the fraction
        # near 0 is sum(2 d / |f'(root)|) / 20 by a root-bracketing oracle
        from scipy.optimize import brentq
        f = compose_prims(
            REG.get("sub"),
            [compose_prims(REG.get("pdfnorm"),
                           [constant(0.0, 1), constant(0.5, 1),
                            projection(1, 1)]),
             constant(0.5, 1)])
        rep = admissibility_probe(f, n_points=400_000,
                                  deltas=(1e-1, 1e-2), rng_seed=3)
        assert rep.passed
        assert rep.fractions[0] > rep.fractions[1] > 0
        r1 = brentq(lambda x: f.eval(x), -1.0, 0.0)
        r2 = brentq(lambda x: f.eval(x), 0.0, 1.0)
        slope = abs(grad_prim(f, [r1])[0])
        expect = sum(2 * 0.01 / abs(grad_prim(f, [r])[0]) for r in (r1, r2)) / 20
        assert slope > 0
        assert rep.fractions[1] == pytest.approx(expect, rel=0.25)

    def test_unverified_tag_noted(self):
        weird = PrimitiveFn("weird", 1, lambda x: x, (lambda x: 1.0,),
                            lambda x: True, UNVERIFIED)
        rep = admissibility_probe(weird, n_points=5000, rng_seed=1)
        assert rep.heuristic
        assert "unverified" in rep.note


class TestRegistryContract:
    def test_surface_names(self):
        for name in ("add", "sub", "mul", "div", "neg", "exp", "log",
                     "sqrt", "pdfnorm", "pdfuniform"):
            assert name in REG

    def test_min_max_deliberately_absent(self):
        assert REG.get("min") is None
        assert REG.get("max") is None

    def test_projections_resolve_for_any_arity(self):
        for l in range(1, 7):
            for i in range(1, l + 1):
                assert REG.get(f"proj{i}of{l}") is not None

    def test_vectorized_eval_agrees_with_scalar(self):
        rng = np.random.default_rng(3)
        for name in REG.names():
            fn = REG.get(name)
            cols = [rng.uniform(lo, hi, 500) for lo, hi in fn.box()]
            vals, ok = fn.np_eval(cols)
            for i in range(500):
                args = [c[i] for c in cols]
                if ok[i]:
                    assert vals[i] == pytest.approx(eval_prim(fn, args),
                                                    rel=1e-12, abs=1e-300)
                else:
                    with pytest.raises(DomainError):
                        eval_prim(fn, args)

    def test_never_nonfinite_without_domain_error(self):
        rng = np.random.default_rng(4)
        for name in REG.names():
            fn = REG.get(name)
            for _ in range(200):
                args = [rng.uniform(-50, 50) for _ in range(fn.arity)]
                try:
                    v = eval_prim(fn, args)
                except DomainError:
                    continue
                assert math.isfinite(v), (name, args)
