"""Reproducible random-number streams.

A stream is identified by a 64-bit master seed plus a nonnegative index.
Identical ``(seed, index)`` pairs reproduce identical draw sequences
bit-for-bit; distinct indices give statistically independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream derived from one master seed.

    Parameters
    ----------
    seed : int
        Master seed, 64-bit unsigned range.
    index : int
        Stream index. Substreams extend the address with further
        integers via :meth:`child`.
    """

    seed: int
    index: int = 0
    _path: tuple = field(default=())

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.index < 0:
            raise ValueError("stream index must be nonnegative")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.index, *self._path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, k: int) -> "RngStream":
        """Independent substream ``k`` of this stream."""
        return RngStream(self.seed, self.index, self._path + (k,))
