"""Deterministic seed substreams.

All randomness in a run flows from a single master seed. Named substreams
make results independent of execution order: the stream for ("folds",) is
the same whether learners were fitted before or after the split.
"""

import hashlib

import numpy as np

__all__ = ["substream", "substream_seed"]


def substream_seed(master_seed: int, *labels) -> int:
    """Derive a 64-bit seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


def substream(master_seed: int, *labels) -> np.random.Generator:
    """A generator seeded by (master_seed, *labels), stable across runs."""
    return np.random.default_rng(substream_seed(master_seed, *labels))
