"""The two comparison policies: always-max and uniform-random."""

from __future__ import annotations

import numpy as np

from .env import EnvAction, action_space_size


def max_policy(s_count: int) -> EnvAction:
    """Every sector takes (+1 degree tilt, +5 dB power): the last index."""
    if s_count < 1:
        raise ValueError("s_count must be >= 1")
    return EnvAction(action_space_size(s_count) - 1)


def random_policy(s_count: int, rng: np.random.Generator) -> EnvAction:
    if s_count < 1:
        raise ValueError("s_count must be >= 1")
    return EnvAction(int(rng.integers(action_space_size(s_count))))
