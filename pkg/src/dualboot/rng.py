"""Deterministic random-number substreams.

Every stochastic routine derives its generator from a root seed plus an
integer path (for example, bootstrap draw index and stage). Streams are
independent of worker count and execution order, so parallel runs reproduce
serial ones bit for bit.
"""

import numpy as np


def substream(seed, *path) -> np.random.Generator:
    """Generator for the substream identified by `path` under `seed`."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(path)))
