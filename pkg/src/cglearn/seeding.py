"""Deterministic seed derivation for independent RNG streams."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Fold integer parts into one child seed.

    Different part tuples give statistically independent streams, so callers
    can salt a master seed with per-purpose and per-task tags without the
    streams colliding.
    """
    if not parts:
        raise ValueError("derive_seed needs at least one integer part")
    seq = np.random.SeedSequence([int(p) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_rng(*parts: int) -> np.random.Generator:
    """Generator seeded by derive_seed(*parts)."""
    return np.random.default_rng(derive_seed(*parts))
