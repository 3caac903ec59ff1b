"""Labeled, reproducible random streams.

One run-level seed fans out into independent substreams identified by
string/int labels, so every consumer (weight init, clone generation,
pool sampling, shuffling, ...) draws from its own generator and adding a
new consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_entropy(label: object) -> int:
    digest = hashlib.blake2s(repr(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *labels: object) -> int:
    """Map (seed, labels...) to a stable 64-bit child seed."""
    entropy = [seed & _MASK64] + [_label_entropy(l) for l in labels]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def stream(seed: int, *labels: object) -> np.random.Generator:
    """Independent generator for the substream named by ``labels``."""
    entropy = [seed & _MASK64] + [_label_entropy(l) for l in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
