"""Named counter-based random streams.

Every source of randomness in the package is a Philox generator keyed by a
hash of (seed, *path). Streams with distinct names are independent and their
draws do not depend on the order in which other streams are consumed, so
replicates can be simulated in any order (or in parallel) with identical
results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *path) -> np.ndarray:
    """Derive a 128-bit Philox key from a seed and a path of labels."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return np.frombuffer(h.digest(), dtype=np.uint64)


def stream(seed: int, *path) -> np.random.Generator:
    """A Generator on its own counter-based stream named by (seed, *path)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))
