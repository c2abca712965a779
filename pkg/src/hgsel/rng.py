"""Named, splittable random streams on a counter-based generator.

Every stochastic operation in the package takes an explicit
``numpy.random.Generator``; there is no global RNG. Streams are derived
from a base seed plus a path of labels, so independent components (views,
trials, restarts) get statistically independent, reproducible generators.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, *path) -> np.random.Generator:
    """Derive an independent generator from ``seed`` and a label path.

    The same ``(seed, *path)`` always yields the same stream; different
    paths yield independent streams (Philox keyed via a SeedSequence).
    String labels are hashed so stream identity does not depend on the
    process hash seed.
    """
    tokens = [int(seed) & _MASK]
    for part in path:
        if isinstance(part, (int, np.integer)):
            tokens.append(int(part) & _MASK)
        else:
            digest = hashlib.blake2s(str(part).encode("utf-8"), digest_size=8).digest()
            tokens.append(int.from_bytes(digest, "big"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(tokens)))
