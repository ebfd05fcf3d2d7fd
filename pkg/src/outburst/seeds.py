"""Counter-based seed derivation.

Every stream in a run is seeded as a pure function of the root seed and an
integer path (tag, indices...), so any replication or Poisson-field block can
be regenerated independently and in any order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Namespace tags keep unrelated derivation paths from colliding.
TAG_REPLICATION = 1
TAG_FIELD_BLOCK = 2
TAG_BOOTSTRAP = 3
TAG_MEASURE = 4


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _zigzag(n: int) -> int:
    # Signed ints (grid cell coordinates) folded onto the nonnegative axis.
    return 2 * n if n >= 0 else -2 * n - 1


def derive_seed(root: int, *path: int) -> int:
    """Stable 64-bit seed for the stream identified by (root, *path)."""
    state = _splitmix64(root & _MASK64)
    for part in path:
        state = _splitmix64(state ^ _zigzag(int(part)))
    return state


def derive_rng(root: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))
