"""Seed derivation for reproducible Monte Carlo streams.

Every stream is a ``numpy.random.Generator`` over the Philox4x64-10
counter-based bit generator, seeded by ``SeedSequence(master_seed,
spawn_key=key)``. A stream depends only on the master seed and its key,
so work split across processes reproduces a serial run exactly.
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy.Philox4x64-10/SeedSequence"


def rng_version() -> str:
    return f"{RNG_NAME} (numpy {np.__version__})"


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream labelled ``key``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, *key: int) -> int:
    """A uint64 seed for stream ``key``, for records that log per-cell seeds."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
