"""Seed derivation - every artifact is reproducible from the experiment seed."""

from typing import Literal

import numpy as np

Role = Literal["synthetic", "model", "train", "validation", "eval", "diagnostics"]

ROLE_OFFSETS: dict[str, int] = {
    "synthetic": 0,
    "model": 101,
    "train": 202,
    "validation": 303,
    "eval": 404,
    "diagnostics": 505,
}


def derive_seed(base_seed: int, role: Role) -> int:
    """Derive a module seed from the experiment seed.

    Args:
        base_seed: Experiment-level seed.
        role: Consumer of the seed.

    Returns:
        base_seed plus the fixed offset of the role.
    """
    return base_seed + ROLE_OFFSETS[role]


Stream = Literal[
    "validation_mask", "validation_sample", "epoch_mask", "epoch_sample", "sweep_mask", "sweep_sample"
]

STREAM_KEYS: dict[str, int] = {
    "validation_mask": 1,
    "validation_sample": 2,
    "epoch_mask": 3,
    "epoch_sample": 4,
    "sweep_mask": 5,
    "sweep_sample": 6,
}


def stream_seed(base_seed: int, stream: Stream, index: int = 0) -> int:
    """Seed of one random stream, hashed from (base_seed, stream, index).

    Distinct streams and indices give independent seeds, so e.g. the mask
    of some epoch never repeats the validation mask.
    """
    sequence = np.random.SeedSequence([base_seed, STREAM_KEYS[stream], index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
