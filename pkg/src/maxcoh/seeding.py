"""Deterministic random-number substreams.

Every stochastic routine in the package draws from a ``numpy.random.Generator``
backed by PCG64. Substreams are derived from a master seed plus an integer
path, e.g. ``substream(seed, STREAM_DATA, m)`` for the m-th matrix of a data
stream. Identical (seed, path) pairs always yield identical streams, so any
prefix of any stream can be regenerated independently of consumption order.
"""

from __future__ import annotations

import numpy as np

# Fixed role tags used as the first path component. Keeping them here (rather
# than ad-hoc string hashes) pins the derivation rule for reproducibility.
STREAM_DATA = 0
STREAM_MEAN = 1
STREAM_EDD = 2
STREAM_MTFA = 3
STREAM_CALIBRATION = 4


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the PCG64 generator for ``(master_seed, *path)``."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.PCG64(ss))
