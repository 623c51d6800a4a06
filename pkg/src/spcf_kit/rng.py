"""Deterministic randomness plumbing.

Every stochastic operation takes one 64-bit seed; independent streams are
derived per (purpose, index) so results are reproducible and independent of
worker scheduling.
"""

from __future__ import annotations

import os
import zlib

import numpy as np


def _key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """An independent generator for (seed, purpose, indices)."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1),
        spawn_key=(_key(purpose),) + tuple(int(i) for i in indices))
    return np.random.default_rng(ss)


def open_unit(rng: np.random.Generator) -> float:
    """Uniform draw from the open interval (0,1); exact 0.0 is rejected."""
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r


def worker_count(requested: int | None = None) -> int:
    """Requested worker count, capped by SPCF_THREADS and the CPU count."""
    cap = os.cpu_count() or 1
    env = os.environ.get("SPCF_THREADS")
    if env:
        try:
            cap = max(1, min(cap, int(env)))
        except ValueError:
            pass
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))
