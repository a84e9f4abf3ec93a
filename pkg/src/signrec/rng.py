"""Named random substreams derived from a single experiment seed.

One seed fans out into independent streams (split, init, sampling, dropout,
...) so toggling a feature does not perturb the randomness of the others.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Return a generator for the stream identified by ``names``.

    Names may mix strings and integers (e.g. an epoch index), so per-epoch
    streams are derived as ``substream(seed, "sampling", epoch)``.
    """
    keys = []
    for name in names:
        if isinstance(name, int):
            keys.append(name & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFFFFFFFFFF, *keys]))
