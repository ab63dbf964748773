"""Seeded, keyed random streams.

Every stochastic entry point in the library takes an explicit
``numpy.random.Generator``.  Helpers here derive independent child streams
from a root seed so that estimators can hand out one stream per subtask
(run, ratio index, chain, ...) and stay bitwise reproducible.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, *key); equal keys yield equal streams."""
    return np.random.default_rng((int(seed),) + tuple(int(k) for k in key))


def substreams(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """n independent children of rng, deterministic given rng's state."""
    return rng.spawn(n)
