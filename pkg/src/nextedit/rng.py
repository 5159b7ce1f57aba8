"""Counter-based random streams.

Every source of randomness in the project is a Philox generator keyed by
(seed, stream). Philox is counter-based, so identical keys reproduce the
same draws on any platform regardless of how many values other streams
consumed.
"""

from __future__ import annotations

import numpy as np

# Stream ids; keeping them distinct means e.g. reshuffling batch sampling
# never perturbs weight init or generation orders.
STREAM_INIT = 0
STREAM_DATA = 1
STREAM_ORDER = 2
STREAM_SAMPLE = 3
STREAM_SCENE = 4


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """A Philox generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(stream)]))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from ``rng``."""
    return [np.random.Generator(np.random.Philox(key=rng.integers(0, 2**63, size=2)))
            for _ in range(n)]
