"""Deterministic sub-seeding.

Every random stream in a run is derived from the master seed with
``numpy.random.SeedSequence(entropy=master_seed, spawn_key=(crc32(label), *extra))``.
The label is a short ASCII tag (``"plant"``, ``"w0"``, a run id such as
``"adapt"``) and ``extra`` carries integer indices like the episode number.
Two runs that share a master seed and a run id therefore see bit-identical
exploration noise, which is what makes lesion/baseline comparisons paired.
"""

import zlib

import numpy as np


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("ascii"))


def derive_rng(master_seed: int, label: str, *extra: int) -> np.random.Generator:
    seq = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(label_key(label), *map(int, extra))
    )
    return np.random.default_rng(seq)


def episode_rng(master_seed: int, run_id: str, k: int) -> np.random.Generator:
    """Noise stream for episode ``k`` of run ``run_id``."""
    return derive_rng(master_seed, run_id, k)
