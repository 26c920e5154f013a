"""Splittable seeding: every random component draws from one root seed.

A (root_seed, *tags) pair maps to an independent numpy Generator via
SeedSequence, so the CLI can hand out reproducible per-component streams
without components sharing or advancing each other's state.
"""

from __future__ import annotations

import numpy as np

# stable component tags; never renumber, only append
TAG_PARAM_INIT = 1
TAG_LOUVAIN = 2
TAG_LABELPROP = 3
TAG_SYNTH = 4
TAG_INJECT = 5
TAG_RUN = 6


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *tags)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags)))


def run_seed(root_seed: int, run_index: int) -> int:
    """Derived integer seed for run `run_index` of a multi-run experiment."""
    ss = np.random.SeedSequence((int(root_seed), TAG_RUN, int(run_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))
