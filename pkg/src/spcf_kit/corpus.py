"""Built-in SPCF example programs.

`PROGRAMS` maps a short name to source text; `load(name)` parses one.
`python -m spcf_kit.corpus export DIR` writes them out as `.spcf` files for
use with the command-line tools.
"""

from __future__ import annotations

import os
import sys

from .parser import TypedProgram, parse

PED = """\
(* Random-walk start-point inference.  A pedestrian starts uniformly within
   3km of the street's end, walks legs of up to 1km in random directions
   until passing the end, and reports 1.1km walked (sd 0.1). *)
let rec walk (x : R) : R =
  if x <= 0 then 0
  else
    let s = sample in
    if sample <= 0.5 then s + walk (x + s) else s + walk (x - s)
in
let start = sample * 3 in
let dist = walk start in
let w = score(pdfnorm(1.1, 0.1, dist)) in
start
"""

WALK = """\
(* The bare walk: total distance travelled from a uniform start on (0,3). *)
let rec walk (x : R) : R =
  if x <= 0 then 0
  else
    let s = sample in
    if sample <= 0.5 then s + walk (x + s) else s + walk (x - s)
in
let start = sample * 3 in
walk start
"""

DIAGONAL = """\
(* Weight is the indicator of s1 <= s2: constant on each side of the
   diagonal, discontinuous on it. *)
if sample <= sample then score(1) else score(0)
"""

GEOMETRIC = """\
(* Draw until a sample falls at or below 0.5; trace length is Geometric(1/2). *)
let rec geo (u : R) : R =
  if sample <= 0.5 then 0 else geo u
in
geo 0
"""

SCORE_MEAN = """\
(* Posterior density 2s on (0,1); posterior mean 2/3. *)
let s = sample in
let w = score(s) in
s
"""

NEG_SCORE = """\
score(-1)
"""

DIVERGE = """\
(* Loops forever without sampling. *)
(fix (fn (f : R -> R) -> f)) 0
"""

ENUMQ = """\
(* Walks an enumeration of the rationals and stops on an exact match with
   the sampled value; runs effectively forever on float samples. *)
let rec enq (p : R) (q : R) (r : R) : R =
  if r <= p / q then
    (if p / q <= r then score(1) else enq p (q + 1) r)
  else
    enq (p + 1) q r
in
enq 0 1 sample
"""

GAUSS_SCORE = """\
(* Branch-free two-sample program with a smooth weight. *)
let s = sample in
let t = sample in
let w = score(pdfnorm(0.5, 0.2, s) * sqrt(t)) in
s + t
"""

UNIFORM_BRANCH = """\
(* Constant uniform-density weight, one conditional split at s = 0.25. *)
let s = sample in
let w = score(pdfuniform(0, 2, s + 0.5)) in
if s <= 0.25 then s else s * 2
"""

LOG_BRANCH = """\
(* Conditional on log(s + 0.5) <= 0, i.e. s <= 0.5. *)
let s = sample in
if log(s + 0.5) <= 0 then score(2) else score(4)
"""

INPUT_GAUSS = """\
(* Open program: theta is the input x_1. *)
let o = sample in
let w = score(pdfnorm(theta, 1.0, o)) in
o
"""

PROGRAMS: dict[str, str] = {
    "ped": PED,
    "walk": WALK,
    "diagonal": DIAGONAL,
    "geometric": GEOMETRIC,
    "score_mean": SCORE_MEAN,
    "neg_score": NEG_SCORE,
    "diverge": DIVERGE,
    "enumq": ENUMQ,
    "gauss_score": GAUSS_SCORE,
    "uniform_branch": UNIFORM_BRANCH,
    "log_branch": LOG_BRANCH,
    "input_gauss": INPUT_GAUSS,
}

#: Closed programs exercised by the soundness/completeness harness.
CLOSED = tuple(n for n in PROGRAMS if n != "input_gauss")


def load(name: str) -> TypedProgram:
    return parse(PROGRAMS[name])


def export(directory: str) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, src in PROGRAMS.items():
        path = os.path.join(directory, f"{name}.spcf")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(src)
        paths.append(path)
    return paths


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) == 2 and args[0] == "export":
        for p in export(args[1]):
            print(p)
        return 0
    if len(args) == 1 and args[0] in PROGRAMS:
        print(PROGRAMS[args[0]], end="")
        return 0
    print("usage: python -m spcf_kit.corpus export DIR | <name>",
          file=sys.stderr)
    print("names:", ", ".join(PROGRAMS), file=sys.stderr)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
