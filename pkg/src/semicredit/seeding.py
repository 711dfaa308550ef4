"""Counter-based random stream derivation.

Every random decision in a run draws from a generator addressed by an
integer path under the run seed, e.g. ``SeedTree(seed).child(CREDIT, k, t, i)``.
Streams with different paths are statistically independent and the mapping
from path to stream is stateless, so any subsystem can rebuild its own
generators without coordinating with the rest of the run.
"""

from __future__ import annotations

import numpy as np

# Fixed path roots for the training loop. Keeping them in one table makes
# accidental stream collisions between subsystems impossible.
INIT = 0
ENV = 1
ROLLOUT = 2
MODEL_FIT = 3
CRITIC_FIT = 4
ACTOR_FIT = 5
CREDIT = 6
EVAL = 7
REPORT = 8


class SeedTree:
    """An immutable node in a tree of deterministic random streams."""

    __slots__ = ("entropy", "path")

    def __init__(self, entropy: int, path: tuple[int, ...] = ()):
        self.entropy = int(entropy)
        self.path = tuple(int(p) for p in path)

    def child(self, *steps: int) -> "SeedTree":
        return SeedTree(self.entropy, self.path + tuple(int(s) for s in steps))

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.entropy, spawn_key=self.path)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence()))

    def integer_seed(self) -> int:
        """A single 63-bit seed for components that take plain ints."""
        return int(self.sequence().generate_state(1, np.uint64)[0] >> np.uint64(1))

    def __repr__(self) -> str:
        return f"SeedTree(entropy={self.entropy}, path={self.path})"
