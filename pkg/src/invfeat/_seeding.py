"""Deterministic seed derivation.

Every random quantity in the package is drawn from a generator whose seed is
derived from a master seed plus a tuple of labels, so that adding templates or
trials never perturbs the streams already in use.
"""
from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"seed labels must be non-negative, got {label}")
        return int(label)
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *labels) -> np.random.SeedSequence:
    """Child seed for ``(master, *labels)``; strings are hashed stably."""
    return np.random.SeedSequence([_label_to_int(master), *map(_label_to_int, labels)])


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
