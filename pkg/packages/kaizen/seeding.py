"""Seed derivation so every random stream is a pure function of (seed, keys)."""

from __future__ import annotations

import numpy as np
import torch

# Stream keys; each consumer draws from its own derived seed.
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_AUGMENT = 2
STREAM_REPLAY = 3
STREAM_LABELLED = 4
STREAM_POSTHOC = 5


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a 63-bit seed from *seed* and integer *keys*."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(key) for key in keys)]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & 0x7FFFFFFFFFFFFFFF


def numpy_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def torch_generator(seed: int, *keys: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *keys))
    return generator
