"""Numeric differentiability analysis of trace densities, branch by branch.

For every terminal branch of the symbolic execution, the weight restricted to
the branch region is a product of closed-form factors and the value is a
closed-form expression, both differentiable on the region interior.  This
module verifies that numerically: forward-mode gradients of the branch
expressions are compared against central finite differences of the *concrete*
replay density at sampled interior points, which cross-checks symbolic
against concrete semantics and smoothness at once.  The region boundaries
(where differentiability genuinely fails, e.g. on the diagonal of
`if sample <= sample ...`) are quantified by shrinking epsilon-shell masses,
and `find_witnesses` locates concrete non-differentiability points between
adjacent branches by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .interp import (
    BUDGET, DEFAULT_STEP_BUDGET, FAILED, STUCK, TERMINATED,
    estimate_termination, replay,
)
from .parser import TypedProgram
from .primitives import BoundaryError, Registry, UNVERIFIED, builtin_registry
from .rng import stream
from .symbolic import (
    BranchLeaf, BranchMap, DEFAULT_INPUT_BOX, Undefined,
    estimate_region_measure, eval_value_expr, explore,
    find_containing_leaves, grad_value_expr, region_contains,
    sample_region_interior_many,
)
from .syntax import is_value_expr


# ---------------------------------------------------------------------------
# Per-branch gradients

def branch_gradient(leaf: BranchLeaf, point: tuple[Sequence[float], Sequence[float]],
                    registry: Optional[Registry] = None,
                    margin: float = 1e-9
                    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """(grad of the weight product, grad of the value) at an interior point.

    The value gradient is None for abstraction-valued branches, whose value
    is locally constant as a term skeleton.  Raises Undefined outside the
    branch domain and BoundaryError too close to a primitive's boundary.
    """
    reg = registry or builtin_registry()
    r, s = point
    dims = len(r) + len(s)
    vals: list[float] = []
    grads: list[np.ndarray] = []
    for f in leaf.config.weight:
        v, g = grad_value_expr(f, r, s, reg, margin)
        vals.append(v)
        grads.append(g)
    wgrad = np.zeros(dims)
    for i, g in enumerate(grads):
        rest = 1.0
        for j, v in enumerate(vals):
            if j != i:
                rest *= v
        wgrad += rest * g
    vgrad: Optional[np.ndarray] = None
    if is_value_expr(leaf.config.term):
        _, vgrad = grad_value_expr(leaf.config.term, r, s, reg, margin)
    return wgrad, vgrad


# ---------------------------------------------------------------------------
# Reporting structures

@dataclass(frozen=True)
class LeafReport:
    leaf_id: int
    n: int
    lambda_valued: bool
    n_points: int
    n_boundary_skipped: int
    max_weight_ad_fd_rel: float
    max_value_ad_fd_rel: float
    max_soundness_rel: float
    measure: float
    measure_ci: float
    boundary_mass: dict[float, float]
    boundary_shrinks: bool
    vacuous: bool
    passed: bool


@dataclass(frozen=True)
class DiffReport:
    program_hash: str
    tol: float
    fd_h: float
    points_per_leaf: int
    ast_mode: str                     # assumed | estimated-ok | unverified
    termination_p_hat: Optional[float]
    leaves: tuple[LeafReport, ...]
    covered_mass: float
    covered_ci: float
    budget_mass: float
    stuck_mass_by_dim: dict[int, float]
    flagged_points: tuple[dict, ...]  # interior points failing the tolerance
    unverified_prims: tuple[str, ...]
    passed: bool

    def to_json(self) -> dict:
        return {
            "schema": "spcf-kit/1",
            "program_hash": self.program_hash,
            "tol": self.tol,
            "fd_h": self.fd_h,
            "points_per_leaf": self.points_per_leaf,
            "ast_mode": self.ast_mode,
            "termination_p_hat": self.termination_p_hat,
            "covered_mass": self.covered_mass,
            "covered_ci": self.covered_ci,
            "budget_mass": self.budget_mass,
            "stuck_mass_by_dim": {str(k): v for k, v
                                  in sorted(self.stuck_mass_by_dim.items())},
            "unverified_prims": list(self.unverified_prims),
            "passed": self.passed,
            "flagged_points": list(self.flagged_points),
            "leaves": [{
                "leaf_id": l.leaf_id, "n": l.n,
                "lambda_valued": l.lambda_valued,
                "n_points": l.n_points,
                "n_boundary_skipped": l.n_boundary_skipped,
                "max_weight_ad_fd_rel": l.max_weight_ad_fd_rel,
                "max_value_ad_fd_rel": l.max_value_ad_fd_rel,
                "max_soundness_rel": l.max_soundness_rel,
                "measure": l.measure, "measure_ci": l.measure_ci,
                "boundary_mass": {str(k): v for k, v
                                  in sorted(l.boundary_mass.items(),
                                            reverse=True)},
                "boundary_shrinks": l.boundary_shrinks,
                "vacuous": l.vacuous, "passed": l.passed,
            } for l in self.leaves],
        }

    def summary(self) -> str:
        lines = [f"differentiability report for {self.program_hash}"
                 f"  (tol={self.tol:g}, h={self.fd_h:g}, "
                 f"a.s.-termination: {self.ast_mode})"]
        for l in self.leaves:
            status = "pass" if l.passed else "FAIL"
            if l.vacuous:
                status = "vacuous (no interior points, measure ~ 0)"
            lines.append(
                f"  leaf {l.leaf_id:3d} n={l.n}  pts={l.n_points:3d} "
                f"w-err={l.max_weight_ad_fd_rel:.2e} "
                f"v-err={l.max_value_ad_fd_rel:.2e} "
                f"mu={l.measure:.4f}  {status}")
        lines.append(f"  covered mass {self.covered_mass:.4f} "
                     f"(+-{self.covered_ci:.4f}), budget mass "
                     f"{self.budget_mass:.4f}")
        lines.append(f"  flagged non-differentiable interior points: "
                     f"{len(self.flagged_points)}")
        lines.append("  overall: " + ("pass" if self.passed else "FAIL"))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# The main check

def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def check_differentiability(prog: TypedProgram,
                            max_depth: int = 150, max_leaves: int = 500,
                            points_per_leaf: int = 50,
                            fd_h: float = 1e-5, tol: float = 1e-4,
                            rng_seed: int = 0, assume_ast: bool = False,
                            step_budget: int = DEFAULT_STEP_BUDGET,
                            input_box: tuple[float, float] = DEFAULT_INPUT_BOX,
                            measure_points: int = 40_000,
                            registry: Optional[Registry] = None,
                            branch_map: Optional[BranchMap] = None
                            ) -> DiffReport:
    """Verify per-branch differentiability of weight and value numerically.

    At interior points of every terminal region, forward-mode gradients of
    the branch weight/value expressions must match central finite differences
    of the concrete replay density to relative error `tol`; the symbolic and
    concrete weights themselves must agree to 1e-9.  Points whose finite
    difference stencil leaves the branch or probes a primitive boundary are
    excluded (the claim is interior-only).  Void regions are reported as
    vacuous.
    """
    reg = registry or builtin_registry()
    bm = branch_map or explore(prog, max_depth, max_leaves,
                               rng_seed=rng_seed, input_box=input_box,
                               registry=reg)
    unverified = tuple(sorted({
        c.expr.prim for l in bm.terminal_leaves()
        for c in l.config.region.constraints
        if hasattr(c.expr, "prim") and (fn := reg.get(c.expr.prim)) is not None
        and fn.class_tag == UNVERIFIED}))

    ast_mode, p_hat = "assumed", None
    if not assume_ast:
        est = estimate_termination(prog, [0.0] * prog.n_inputs
                                   if prog.n_inputs else (),
                                   n_runs=500,
                                   step_budget=min(step_budget, 100_000),
                                   rng_seed=rng_seed)
        p_hat = est.p_hat
        ast_mode = "estimated-ok" if est.p_hat >= 0.999 else "unverified"

    margin = max(0.02, 8.0 * fd_h)
    leaf_reports: list[LeafReport] = []
    flagged: list[dict] = []
    covered = 0.0
    covered_var = 0.0
    for li, leaf in enumerate(bm.terminal_leaves()):
        est = estimate_region_measure(leaf.config.region, measure_points,
                                      rng_seed=rng_seed + 7 * li,
                                      input_box=input_box, registry=reg)
        covered += est.mean
        covered_var += est.ci_halfwidth ** 2
        pts = sample_region_interior_many(
            leaf.config.region, points_per_leaf, margin,
            max_tries=400_000, rng_seed=rng_seed + 13 * li,
            input_box=input_box, registry=reg)
        lam = leaf.is_lambda_valued
        max_w = max_v = max_s = 0.0
        skipped = 0
        used = 0
        for (r, s) in pts:
            res = _check_point(prog, leaf, r, s, fd_h, reg, step_budget)
            if res is None:
                skipped += 1
                continue
            used += 1
            w_err, v_err, s_err, pt_flag = res
            max_w = max(max_w, w_err)
            max_v = max(max_v, v_err)
            max_s = max(max_s, s_err)
            if pt_flag and (w_err > tol or v_err > tol):
                flagged.append({"leaf_id": leaf.leaf_id, "r": list(r),
                                "s": list(s), "weight_err": w_err,
                                "value_err": v_err})
        vacuous = not pts and est.mean <= 3 * est.ci_halfwidth + 1e-4
        bm_masses = sorted(est.boundary_mass.items(), reverse=True)
        floor = 10.0 / est.n_points
        shrinks = all(b2 <= b1 * 1.25 + floor
                      for (_, b1), (_, b2) in zip(bm_masses, bm_masses[1:]))
        ok = vacuous or (used > 0 and max_w <= tol and max_v <= tol
                         and max_s <= 1e-9 and shrinks)
        leaf_reports.append(LeafReport(
            leaf.leaf_id, leaf.config.region.n, lam, used, skipped,
            max_w, max_v, max_s, est.mean, est.ci_halfwidth,
            est.boundary_mass, shrinks, vacuous, ok))

    budget_mass = 0.0
    for leaf in bm.budget_leaves():
        budget_mass += estimate_region_measure(
            leaf.config.region, max(2000, measure_points // 10),
            rng_seed=rng_seed, input_box=input_box, registry=reg).mean

    stuck_by_dim = _stuck_union_mass(bm, rng_seed, input_box, reg)
    passed = all(l.passed for l in leaf_reports)
    return DiffReport(
        bm.program_hash, tol, fd_h, points_per_leaf, ast_mode, p_hat,
        tuple(leaf_reports), covered, math.sqrt(covered_var), budget_mass,
        stuck_by_dim, tuple(flagged), unverified, passed)


def _check_point(prog: TypedProgram, leaf: BranchLeaf, r, s, fd_h: float,
                 reg: Registry, step_budget: int):
    """One interior point: soundness + AD-vs-FD.  None = excluded point."""
    cfg = leaf.config
    base = replay(prog, r, s, step_budget, reg)
    if base.outcome != TERMINATED or not base.exact:
        return None  # stencil center must land in the branch
    w_sym = cfg.weight_at(r, s, reg)
    if w_sym is None:
        return None
    s_err = _rel_err(w_sym, base.weight)
    v_sym: Optional[float] = None
    if not leaf.is_lambda_valued:
        v_sym = eval_value_expr(cfg.term, r, s, reg)
        bv = base.value_float()
        if v_sym is None or bv is None:
            return None
        s_err = max(s_err, _rel_err(v_sym, bv))
    try:
        wgrad, vgrad = branch_gradient(leaf, (r, s), reg, margin=fd_h * 1e-3)
    except BoundaryError:
        return None
    except Undefined:
        return None
    dims = len(r) + len(s)
    w_err = v_err = 0.0
    for k in range(dims):
        plus = _perturb(r, s, k, fd_h)
        minus = _perturb(r, s, k, -fd_h)
        out_p = replay(prog, *plus, step_budget, reg)
        out_m = replay(prog, *minus, step_budget, reg)
        if (out_p.branch_choices != base.branch_choices
                or out_m.branch_choices != base.branch_choices
                or not (out_p.exact and out_m.exact)):
            return None  # stencil crossed a branch boundary
        fd_w = (out_p.weight - out_m.weight) / (2 * fd_h)
        w_err = max(w_err, _rel_err(wgrad[k], fd_w))
        if vgrad is not None:
            vp, vm = out_p.value_float(), out_m.value_float()
            if vp is None or vm is None:
                return None
            fd_v = (vp - vm) / (2 * fd_h)
            v_err = max(v_err, _rel_err(vgrad[k], fd_v))
    return w_err, v_err, s_err, True


def _perturb(r, s, k: int, h: float):
    m = len(r)
    if k < m:
        rr = list(r)
        rr[k] += h
        return rr, list(s)
    ss = list(s)
    ss[k - m] += h
    return list(r), ss


def _stuck_union_mass(bm: BranchMap, rng_seed: int, input_box,
                      reg: Registry) -> dict[int, float]:
    """Per-dimension mass of the union of stuck-region snapshots."""
    from .symbolic import region_contains_batch, _draw_points
    by_dim: dict[int, list] = {}
    for sr in bm.stuck_regions:
        by_dim.setdefault(sr.region.n, [])
        if sr.region.constraints not in [x.constraints
                                         for x in by_dim[sr.region.n]]:
            by_dim[sr.region.n].append(sr.region)
    out: dict[int, float] = {}
    n_pts = 4000
    for n, regions in sorted(by_dim.items()):
        rng = stream(rng_seed, "stuck", n)
        R, S = _draw_points(regions[0], n_pts, rng, input_box)
        member = np.zeros(n_pts, dtype=bool)
        for region in regions:
            member |= region_contains_batch(region, R, S, reg)
        scale = (input_box[1] - input_box[0]) ** bm.m
        out[n] = float(member.mean()) * scale
    return out


# ---------------------------------------------------------------------------
# Witness hunting

@dataclass(frozen=True)
class Witness:
    point: tuple[tuple[float, ...], tuple[float, ...]]
    leaf_low: int            # leaf containing x - eta * d
    leaf_high: Optional[int]  # leaf containing x + eta * d, if any
    weight_gap: float
    value_gap: Optional[float]
    direction: tuple[float, ...]


def find_witnesses(prog: TypedProgram, bm: BranchMap,
                   leaf_pair: tuple[int, int], n_probe: int = 8,
                   rng_seed: int = 0, jump_threshold: float = 1e-6,
                   eta: float = 1e-5,
                   step_budget: int = DEFAULT_STEP_BUDGET,
                   registry: Optional[Registry] = None) -> list[Witness]:
    """Bisect segments between two terminal branches for discontinuities.

    Endpoints are interior points of the two leaves (equal trace dimension);
    the crossing of the first leaf's boundary is located by bisection and
    kept when weight or value jumps across it by at least the threshold.
    """
    reg = registry or builtin_registry()
    a_id, b_id = leaf_pair
    leaves = {l.leaf_id: l for l in bm.terminal_leaves()}
    la, lb = leaves[a_id], leaves[b_id]
    if la.config.region.n != lb.config.region.n:
        raise ValueError("witness search needs equal trace dimensions")
    pts_a = sample_region_interior_many(la.config.region, n_probe,
                                        rng_seed=rng_seed,
                                        input_box=bm.input_box, registry=reg)
    pts_b = sample_region_interior_many(lb.config.region, n_probe,
                                        rng_seed=rng_seed + 1,
                                        input_box=bm.input_box, registry=reg)
    out: list[Witness] = []
    for (ra, sa), (rb, sb) in zip(pts_a, pts_b):
        xa = np.array(list(ra) + list(sa))
        xb = np.array(list(rb) + list(sb))
        m = len(ra)

        def in_a(x: np.ndarray) -> bool:
            return region_contains(la.config.region, x[:m], x[m:], reg)

        lo, hi = 0.0, 1.0  # x(lo) in leaf a, x(hi) not
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if in_a(xa + mid * (xb - xa)):
                lo = mid
            else:
                hi = mid
        xstar = xa + 0.5 * (lo + hi) * (xb - xa)
        d = (xb - xa) / np.linalg.norm(xb - xa)
        x_lo = xstar - eta * d
        x_hi = xstar + eta * d
        out_lo = replay(prog, x_lo[:m], x_lo[m:], step_budget, reg)
        out_hi = replay(prog, x_hi[:m], x_hi[m:], step_budget, reg)
        w_lo = out_lo.weight if out_lo.exact else 0.0
        w_hi = out_hi.weight if out_hi.exact else 0.0
        wgap = abs(w_hi - w_lo)
        v_lo = out_lo.value_float() if out_lo.exact else None
        v_hi = out_hi.value_float() if out_hi.exact else None
        vgap = abs(v_hi - v_lo) if v_lo is not None and v_hi is not None \
            else None
        if wgap < jump_threshold and (vgap is None or vgap < jump_threshold):
            continue
        hi_leaves = find_containing_leaves(bm, tuple(x_hi[:m]),
                                           tuple(x_hi[m:]), reg)
        out.append(Witness(
            (tuple(float(v) for v in xstar[:m]),
             tuple(float(v) for v in xstar[m:])),
            a_id, hi_leaves[0].leaf_id if hi_leaves else None,
            wgap, vgap, tuple(float(v) for v in d)))
    return out


# ---------------------------------------------------------------------------
# Trace-space classification by concrete replay

@dataclass(frozen=True)
class ClassifyReport:
    n_points: int
    max_dim: int
    masses: dict[int, dict[str, float]]  # dim -> category -> mass

    def category_total(self, cat: str) -> float:
        return sum(d.get(cat, 0.0) for d in self.masses.values())


def classify_trace_space(prog: TypedProgram, max_dim: int = 5,
                         n_points: int = 2000,
                         step_budget: int = 100_000,
                         rng_seed: int = 0,
                         registry: Optional[Registry] = None
                         ) -> ClassifyReport:
    """Classify random traces of each dimension by concrete replay.

    Categories per dimension n (each S_n carries total mass 1): terminated
    (exact consumption), prefix (a proper prefix already terminated), stuck
    (the run wants more samples), failed, budget.
    """
    if prog.n_inputs:
        raise ValueError("trace-space classification needs a closed program")
    reg = registry or builtin_registry()
    masses: dict[int, dict[str, float]] = {}
    for n in range(max_dim + 1):
        counts = {TERMINATED: 0, "prefix": 0, STUCK: 0, FAILED: 0, BUDGET: 0}
        k = 1 if n == 0 else n_points
        rng = stream(rng_seed, "classify", n)
        for _ in range(k):
            s = [float(v) for v in rng.uniform(1e-12, 1.0, n)]
            out = replay(prog, (), s, step_budget, reg)
            if out.outcome == TERMINATED:
                counts["prefix" if out.unconsumed else TERMINATED] += 1
            elif out.outcome == FAILED:
                counts[FAILED] += 1
            elif out.outcome == STUCK:
                counts[STUCK] += 1
            else:
                counts[BUDGET] += 1
        masses[n] = {c: v / k for c, v in counts.items()}
    return ClassifyReport(n_points, max_dim, masses)
