"""Substream derivation for every seeded stage.

A master seed plus a path of labels (stage name, rep index, trajectory
index, grid coordinates) maps to an independent numpy stream.
"""

import zlib
from typing import Union

import numpy as np

Label = Union[int, str]


def _spawn_key(path) -> tuple:
    key = []
    for label in path:
        if isinstance(label, str):
            key.append(zlib.crc32(label.encode("utf-8")))
        else:
            key.append(int(label))
    return tuple(key)


def seed_sequence(seed: int, *path: Label) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=_spawn_key(path))


def derive_rng(seed: int, *path: Label) -> np.random.Generator:
    """Generator keyed by (seed, *path); equal keys give identical streams."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))


def derive_seed(seed: int, *path: Label) -> int:
    """32-bit integer seed for libraries that take ``random_state``."""
    return int(seed_sequence(seed, *path).generate_state(1, dtype=np.uint32)[0])
