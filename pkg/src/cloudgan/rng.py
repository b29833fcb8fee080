"""Counter-based random streams split from one master seed.

A stream is identified by ``(seed, purpose, *counters)``; the tuple is
hashed by :class:`numpy.random.SeedSequence` into a Philox key. Training
keys noise by ``(epoch, batch, step, global_sample_index)`` so the draws a
sample receives do not depend on how the batch is sharded across replicas.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "disc_noise": 1,
    "gen_noise": 2,
    "gen_labels": 3,
    "init": 4,
    "data": 5,
    "jitter": 6,
    "eval_noise": 7,
}


def stream(seed: int, purpose: str, *counters: int) -> np.random.Generator:
    entropy = [int(seed), PURPOSES[purpose], *(int(c) for c in counters)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, purpose: str, *counters: int) -> int:
    """A 63-bit integer seed for components that take plain ints."""
    return int(stream(seed, purpose, *counters).integers(0, 2**63 - 1))
