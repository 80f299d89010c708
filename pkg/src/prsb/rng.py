"""Deterministic random-stream derivation.

Every stochastic component draws from a named stream derived from the
user-facing seed plus a path of labels, so runs are reproducible and
independent components never share state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_key(path):
    key = []
    for part in path:
        if isinstance(part, str):
            key.append(zlib.crc32(part.encode("utf-8")))
        else:
            part = int(part)
            if part < 0:
                raise ValueError(f"stream path elements must be non-negative, got {part}")
            key.append(part)
    return tuple(key)


def stream(seed: int, *path) -> np.random.Generator:
    """Return a Generator for the stream named by ``(seed, *path)``.

    Equal arguments always produce an identical stream; different paths
    produce statistically independent streams.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=_path_key(path))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *path) -> int:
    """Fold a path into a plain integer seed for handing to sub-components."""
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=_path_key(path))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])
