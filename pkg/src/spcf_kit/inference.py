"""Trace-space Bayesian inference over the run density.

The weight of a run is an unnormalized density over traces, so expectations
of the program's value can be estimated by importance sampling with the prior
(run the program, weight each sample by its final weight) or by a single-site
Metropolis-Hastings walk over traces.

The MH proposal perturbs one uniformly chosen trace coordinate with a
Gaussian reflected into (0,1) and replays the program: the prefix up to the
edited site is reused and any additional samples the new control path needs
are drawn fresh from the prior.  Reflection keeps the kernel symmetric and
fresh-suffix draws have density 1, so the acceptance ratio reduces to the
weight ratio, which also covers moves that change the trace dimension.
Proposals whose replay fails, exceeds the step budget, or lands on weight 0
are rejected outright.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .interp import (
    DEFAULT_STEP_BUDGET, TERMINATED, RunResult, run_with_rng, substitute_inputs,
    _run_machine,
)
from .parser import TypedProgram
from .primitives import Registry, builtin_registry
from .rng import open_unit, stream

__all__ = [
    "PosteriorSample", "Histogram", "ImportanceResult", "ChainResult",
    "InitFailure", "importance_sample", "trace_mh", "histogram",
    "export_csv", "export_jsonl",
]


class InitFailure(Exception):
    """No positive-weight initial trace found within the given prior draws."""


@dataclass(frozen=True, slots=True)
class PosteriorSample:
    value: Optional[float]
    weight: float
    trace: tuple[float, ...]


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]   # n_bins + 1 increasing edges
    masses: tuple[float, ...]  # weighted mass per bin
    total_weight: float

    def mode_bin(self) -> tuple[float, float]:
        i = int(np.argmax(self.masses))
        return self.edges[i], self.edges[i + 1]

    def mode_center(self) -> float:
        lo, hi = self.mode_bin()
        return 0.5 * (lo + hi)


def _weighted_mean(samples: Sequence[PosteriorSample]) -> float:
    num = sum(s.weight * s.value for s in samples
              if s.value is not None and s.weight > 0)
    den = sum(s.weight for s in samples if s.value is not None)
    return num / den if den else float("nan")


@dataclass(frozen=True)
class ImportanceResult:
    samples: tuple[PosteriorSample, ...]
    ess: float

    def posterior_mean(self) -> float:
        return _weighted_mean(self.samples)


@dataclass(frozen=True)
class ChainResult:
    samples: tuple[PosteriorSample, ...]
    acceptance_rate: float

    def posterior_mean(self) -> float:
        return float(np.mean([s.value for s in self.samples
                              if s.value is not None]))


def importance_sample(prog: TypedProgram, n: int, rng_seed: int = 0,
                      step_budget: int = DEFAULT_STEP_BUDGET,
                      registry: Optional[Registry] = None) -> ImportanceResult:
    """Prior-proposal importance sampling: each run carries its own weight.

    Runs that fail, get stuck, or exceed the budget carry weight 0.
    """
    reg = registry or builtin_registry()
    out: list[PosteriorSample] = []
    for i in range(n):
        rng = stream(rng_seed, "is", i)
        res = run_with_rng(prog, (), rng, step_budget, reg)
        if res.outcome == TERMINATED:
            out.append(PosteriorSample(res.value_float(), res.weight, res.trace))
        else:
            out.append(PosteriorSample(None, 0.0, res.trace))
    wsum = sum(s.weight for s in out)
    w2sum = sum(s.weight * s.weight for s in out)
    ess = (wsum * wsum / w2sum) if w2sum > 0 else 0.0
    if ess < 0.01 * n:
        warnings.warn(f"importance sampling ESS {ess:.1f} of {n} draws; "
                      "positive-weight terminating runs are rare",
                      stacklevel=2)
    return ImportanceResult(tuple(out), ess)


def _reflect_unit(x: float) -> float:
    """Reflect into [0,1] (endpoints possible; caller rejects them)."""
    y = math.fmod(abs(x), 2.0)
    return 2.0 - y if y > 1.0 else y


def trace_mh(prog: TypedProgram, n_steps: int, rng_seed: int = 0,
             proposal_sigma: float = 0.25,
             step_budget: int = DEFAULT_STEP_BUDGET,
             init_tries: int = 1000,
             registry: Optional[Registry] = None) -> ChainResult:
    """Single-site Metropolis-Hastings over traces; see the module docstring.

    The chain is initialized from the prior; raises InitFailure when no
    positive-weight run is found within `init_tries` attempts.
    """
    reg = registry or builtin_registry()
    term = substitute_inputs(prog, ())
    state: Optional[RunResult] = None
    for i in range(init_tries):
        rng = stream(rng_seed, "mh-init", i)
        res = run_with_rng(prog, (), rng, step_budget, reg)
        if res.outcome == TERMINATED and res.weight > 0:
            state = res
            break
    if state is None:
        raise InitFailure(f"no positive-weight trace in {init_tries} prior runs")

    rng = stream(rng_seed, "mh")
    chain: list[PosteriorSample] = []
    accepted = 0
    for _ in range(n_steps):
        trace = state.trace
        if trace:
            k = int(rng.integers(len(trace)))
            prop = _reflect_unit(trace[k] + proposal_sigma * rng.standard_normal())
            if 0.0 < prop < 1.0:
                prefix = list(trace)
                prefix[k] = prop
                cand = _replay_with_fresh_suffix(term, prefix, rng,
                                                 step_budget, reg)
                if (cand.outcome == TERMINATED and cand.weight > 0
                        and rng.random() < min(1.0, cand.weight / state.weight)):
                    state = cand
                    accepted += 1
        chain.append(PosteriorSample(state.value_float(), state.weight,
                                     state.trace))
    return ChainResult(tuple(chain), accepted / n_steps if n_steps else 0.0)


def _replay_with_fresh_suffix(term, prefix: list[float], rng,
                              step_budget: int, reg: Registry) -> RunResult:
    pos = 0

    def source() -> Optional[float]:
        nonlocal pos
        if pos < len(prefix):
            pos += 1
            return prefix[pos - 1]
        return open_unit(rng)

    return _run_machine(term, source, step_budget, reg)


# ---------------------------------------------------------------------------
# Histograms and exports

def histogram(samples: Sequence[PosteriorSample], n_bins: int,
              value_range: tuple[float, float]) -> Histogram:
    """Weighted histogram of sample values over a fixed range."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    vals = np.array([s.value for s in samples if s.value is not None])
    wts = np.array([s.weight for s in samples if s.value is not None])
    if vals.size == 0 or wts.sum() <= 0:
        raise ValueError("no weighted samples to bin")
    masses, edges = np.histogram(vals, bins=n_bins, range=value_range,
                                 weights=wts)
    return Histogram(tuple(float(e) for e in edges),
                     tuple(float(m) for m in masses), float(wts.sum()))


def export_csv(hist: Histogram, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,mass\n")
        for lo, hi, m in zip(hist.edges, hist.edges[1:], hist.masses):
            fh.write(f"{lo!r},{hi!r},{m!r}\n")


def export_jsonl(samples: Sequence[PosteriorSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({"value": s.value, "weight": s.weight,
                                 "trace_len": len(s.trace)},
                                sort_keys=True) + "\n")
