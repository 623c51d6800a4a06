"""Command-line front end: run, replay, explore, diffcheck, infer.

Every stochastic subcommand requires an explicit --seed; identical flags and
seed produce byte-identical output.  Programs are read from `.spcf` files
(`-` reads stdin).  JSON documents carry "schema": "spcf-kit/1".

Exit codes: `run` exits 0 on termination, 2 on a failed run, 3 on budget
exhaustion; `diffcheck` exits 1 when an interior-point check misses its
tolerance; other commands exit 0, with usage errors reported as 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .diffcheck import check_differentiability
from .inference import export_csv, export_jsonl, histogram, importance_sample, trace_mh
from .interp import (
    BUDGET, DEFAULT_STEP_BUDGET, FAILED, TERMINATED, RunResult, replay,
    run_sampling,
)
from .parser import TypedProgram, parse
from .symbolic import branch_map_to_json, explore
from .syntax import Const, pretty

SCHEMA = "spcf-kit/1"


def _load(path: str) -> TypedProgram:
    if path == "-":
        return parse(sys.stdin.read())
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def _floats(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(x) for x in text.split(",")]


def _emit(doc: dict, out: Optional[str]) -> None:
    blob = json.dumps(doc, sort_keys=True, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(blob + "\n")
    else:
        print(blob)


def _run_record(res: RunResult, seed: Optional[int]) -> dict:
    return {
        "schema": SCHEMA,
        "outcome": res.outcome,
        "exact": res.exact,
        "value": res.value_float() if res.exact else None,
        "value_term": (pretty(res.value)
                       if res.value is not None and not isinstance(res.value, Const)
                       else None),
        "weight": res.weight if res.exact else 0.0,
        "raw_weight": res.weight,
        "trace": list(res.trace),
        "steps": res.steps,
        "reason": res.reason,
        "unconsumed": res.unconsumed,
        "seed": seed,
    }


def cmd_run(args) -> int:
    prog = _load(args.file)
    res = run_sampling(prog, _floats(args.inputs), args.seed, args.max_steps)
    _emit(_run_record(res, args.seed), args.out)
    if res.outcome == TERMINATED:
        return 0
    if res.outcome == FAILED:
        return 2
    if res.outcome == BUDGET:
        return 3
    return 2


def cmd_replay(args) -> int:
    prog = _load(args.file)
    res = replay(prog, _floats(args.inputs), _floats(args.trace),
                 args.max_steps)
    _emit(_run_record(res, None), args.out)
    return 0


def cmd_explore(args) -> int:
    prog = _load(args.file)
    bm = explore(prog, args.max_depth, args.max_leaves,
                 rng_seed=args.seed)
    doc = branch_map_to_json(bm, measures=args.measures, rng_seed=args.seed)
    _emit(doc, args.out)
    n_term = len(bm.terminal_leaves())
    n_budget = len(bm.budget_leaves())
    print(f"leaves: {n_term} terminal, {n_budget} budget, "
          f"{bm.n_pruned_empty} pruned empty; "
          f"{len(bm.stuck_regions)} stuck-region snapshots", file=sys.stderr)
    return 0


def cmd_diffcheck(args) -> int:
    prog = _load(args.file)
    rep = check_differentiability(
        prog, max_depth=args.max_depth, max_leaves=args.max_leaves,
        points_per_leaf=args.points, fd_h=args.fd_h, tol=args.tol,
        rng_seed=args.seed, assume_ast=args.assume_ast,
        step_budget=args.max_steps)
    print(rep.summary())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(rep.to_json(), sort_keys=True, indent=2) + "\n")
    if rep.unverified_prims:
        print("warning: unverified primitives in use: "
              + ", ".join(rep.unverified_prims), file=sys.stderr)
    return 0 if rep.passed else 1


def cmd_infer(args) -> int:
    if args.n < 1:
        print("infer: -n must be at least 1", file=sys.stderr)
        return 2
    prog = _load(args.file)
    if args.method == "is":
        res = importance_sample(prog, args.n, args.seed, args.max_steps)
        samples = res.samples
        extra = f"ess={res.ess:.1f}"
    else:
        res = trace_mh(prog, args.n, args.seed, args.sigma, args.max_steps)
        samples = res.samples
        extra = f"acceptance={res.acceptance_rate:.3f}"
    mean = res.posterior_mean()
    rng = tuple(_floats(args.range)) if args.range else None
    if rng is None:
        vals = [s.value for s in samples if s.value is not None]
        rng = (min(vals), max(vals)) if vals else (0.0, 1.0)
    hist = histogram(samples, args.bins, rng)
    if args.out:
        export_csv(hist, args.out)
    if args.samples_out:
        export_jsonl(samples, args.samples_out)
    lo, hi = hist.mode_bin()
    print(f"method={args.method} n={args.n} seed={args.seed} "
          f"posterior_mean={mean:.6f} {extra} "
          f"mode_bin=[{lo:.4f},{hi:.4f}] total_weight={hist.total_weight:.6g}")
    return 0


def _common_run_flags(p, seed_required: bool):
    p.add_argument("file", help="program path (.spcf), or - for stdin")
    p.add_argument("--seed", type=int, required=seed_required,
                   help="64-bit RNG seed (required: no wall-clock seeding)")
    p.add_argument("--max-steps", type=int, default=DEFAULT_STEP_BUDGET,
                   help="reduction-step budget per run")
    p.add_argument("--out", help="write the JSON/CSV result here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spcf",
        description="SPCF toolkit: concrete runs, symbolic branch maps, "
                    "differentiability analysis, and trace-space inference.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="one seeded sampling run")
    _common_run_flags(p, seed_required=True)
    p.add_argument("--inputs", default="", help="comma-separated input reals")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("replay", help="deterministic run on a given trace")
    _common_run_flags(p, seed_required=False)
    p.add_argument("--trace", default="", help="comma-separated samples in (0,1)")
    p.add_argument("--inputs", default="", help="comma-separated input reals")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("explore", help="symbolic branch map of the trace space")
    _common_run_flags(p, seed_required=True)
    p.add_argument("--max-depth", type=int, default=300)
    p.add_argument("--max-leaves", type=int, default=2000)
    p.add_argument("--measures", action="store_true",
                   help="estimate terminal region volumes")
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("diffcheck",
                       help="verify a.e.-differentiability numerically")
    _common_run_flags(p, seed_required=True)
    p.add_argument("--max-depth", type=int, default=150)
    p.add_argument("--max-leaves", type=int, default=500)
    p.add_argument("--points", type=int, default=50,
                   help="interior points per terminal branch")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--fd-h", type=float, default=1e-5)
    p.add_argument("--assume-ast", action="store_true",
                   help="assert almost-sure termination instead of estimating")
    p.set_defaults(fn=cmd_diffcheck)

    p = sub.add_parser("infer", help="posterior inference over traces")
    _common_run_flags(p, seed_required=True)
    p.add_argument("--method", choices=("is", "mh"), default="mh")
    p.add_argument("-n", type=int, required=True,
                   help="number of samples / chain steps")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--range", default="", help="histogram range lo,hi")
    p.add_argument("--sigma", type=float, default=0.25,
                   help="MH proposal standard deviation")
    p.add_argument("--samples-out", help="write a JSONL sample stream here")
    p.set_defaults(fn=cmd_infer)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
