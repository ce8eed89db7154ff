"""Counter-based random substreams.

Every stochastic component of the library draws from a Philox generator
keyed by ``(seed, path)``. Substreams are independent of evaluation
order, so parallel and serial sweeps see identical randomness.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fold_path(*path: int) -> int:
    """Mix an integer path into a single 64-bit word (order sensitive)."""
    acc = 0x243F6A8885A308D3
    for part in path:
        acc = _splitmix64(acc ^ (int(part) & _MASK64))
    return acc


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox substream for ``(seed, *path)``.

    The same arguments always yield a generator in the same state; distinct
    paths yield statistically independent streams.
    """
    key = (int(seed) & _MASK64, fold_path(*path))
    return np.random.Generator(np.random.Philox(key=key))
