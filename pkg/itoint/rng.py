"""
Reproducible Gaussian streams.

Every stream is addressed by (master seed, path index, purpose) and built
from a counter-based Philox bit generator keyed through a SeedSequence, so a
path's draws never depend on how many other paths were generated before it.
Normals come from a fixed inverse-CDF transform of open-interval uniforms.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.stats import norm

from .errors import UsageError

MAX_SEED = 2**64 - 1

# 52 random bits per uniform; the half-step offset keeps draws off 0 and 1 exactly
_UNIFORM_BITS = 52
_UNIFORM_SCALE = 1.0 / float(2**_UNIFORM_BITS)


class PurposeTag(str, Enum):
    """What a stream is used for."""

    PATH_INCREMENTS = "path-increments"
    BRIDGE_REFINEMENT = "bridge-refinement"
    CONTINUATION = "continuation"

    @property
    def code(self) -> int:
        return _PURPOSE_CODES[self]


_PURPOSE_CODES = {
    PurposeTag.PATH_INCREMENTS: 0,
    PurposeTag.BRIDGE_REFINEMENT: 1,
    PurposeTag.CONTINUATION: 2,
}


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent Gaussian stream."""

    master_seed: int
    path_index: int
    purpose_tag: PurposeTag

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed <= MAX_SEED:
            raise UsageError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.path_index < 0:
            raise UsageError(f"path_index must be non-negative, got {self.path_index}")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.path_index, self.purpose_tag.code),
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def parse_seed(value: Union[int, str]) -> int:
    """
    Parse a master seed given as an int, a decimal string or a 0x-hex string.

    Raises:
        UsageError: If the value is not a 64-bit unsigned integer
    """
    if isinstance(value, bool):
        raise UsageError(f"Invalid seed: {value!r}")
    if isinstance(value, str):
        text = value.strip().lower()
        try:
            seed = int(text, 16) if text.startswith("0x") else int(text, 10)
        except ValueError:
            raise UsageError(f"Invalid seed: {value!r}")
    else:
        seed = int(value)
    if not 0 <= seed <= MAX_SEED:
        raise UsageError(f"Seed out of 64-bit unsigned range: {value!r}")
    return seed


def derive_seed(master: int, path_index: int, purpose_tag: Union[PurposeTag, str]) -> SeedSpec:
    """Address the stream for one path and purpose under a master seed."""
    return SeedSpec(
        master_seed=int(master),
        path_index=int(path_index),
        purpose_tag=PurposeTag(purpose_tag),
    )


def uniform_stream(seed: SeedSpec, count: int) -> np.ndarray:
    """Uniform draws strictly inside (0, 1)."""
    if count < 1:
        raise UsageError(f"count must be at least 1, got {count}")
    bits = seed.generator().integers(0, 2**_UNIFORM_BITS, size=count, dtype=np.uint64)
    return (bits.astype(np.float64) + 0.5) * _UNIFORM_SCALE


def gaussian_stream(seed: SeedSpec, count: int) -> np.ndarray:
    """
    Standard-normal draws for a stream.

    Args:
        seed: Stream address
        count: Number of draws, at least 1

    Returns:
        Array of `count` independent N(0, 1) variates; equal arguments give
        bit-identical arrays

    Raises:
        UsageError: If count < 1
    """
    return norm.ppf(uniform_stream(seed, count))
