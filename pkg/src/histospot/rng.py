"""Named random substreams.

Every stage draws from one pipeline-level seed through named substreams
("stain", "init", "shuffle", "augment", ...), so a stage can be re-run in
isolation and parallel schedules cannot change what any consumer sees.
Names are folded into the seed via CRC32, which is stable across runs and
platforms.
"""

import zlib

import numpy as np


def _fold(name) -> int:
    if isinstance(name, str):
        return zlib.crc32(name.encode("utf-8"))
    return int(name) & 0xFFFFFFFF


def substream(seed: int, *names) -> np.random.Generator:
    """Return a Generator for the substream identified by ``names``.

    ``names`` may mix strings (stage or sample identifiers) and integers
    (epoch counters). Identical (seed, names) always yields an identical
    stream; distinct names yield independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_fold(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))
