"""Counter-based random streams.

Every stochastic draw in a run comes from a Philox generator keyed by
``(seed, node, iteration, purpose)``. Streams are independent of the order
in which nodes are evaluated, so node-parallel execution reproduces the
serial result exactly.
"""

from __future__ import annotations

import numpy as np

SAMPLES = 0
CENTRAL = 1
PILOT = 2
TEST = 3


def stream(seed: int, node: int, t: int, purpose: int = SAMPLES) -> np.random.Generator:
    words = np.random.SeedSequence([int(seed), int(node), int(t), int(purpose)])
    key = words.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
