"""Labeled sub-seed derivation so every stage draws from its own stream."""

import hashlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label))
