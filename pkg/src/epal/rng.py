"""Seeded, order-independent random substreams.

Every stochastic step in the library (weight init, shuffles, dropout masks,
subsampling) draws from an `RngStream` addressed by a master seed plus a
tuple of integer ids. Two streams with different keys are statistically
independent, and the sequence produced by one stream never depends on how
many draws other streams have made. This is what makes trial results
reproducible regardless of execution order or parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A keyed random substream: (seed, key) fully determines the draws.

    Backed by the counter-based Philox generator keyed through
    ``SeedSequence(seed, spawn_key=key)``, so constructing the same stream
    twice always replays the same sequence.
    """

    seed: int
    key: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        """Derive a substream by appending ids to the key."""
        return RngStream(self.seed, self.key + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def derive_seed(self) -> int:
        """Collapse the stream to a 64-bit integer seed."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])
