"""Seeded, splittable random streams.

Backed by numpy's Philox counter-based bit generator, whose output for a given
seed is fixed across platforms. Uniforms are drawn in blocks so the Python hot
loops pay one attribute lookup per draw instead of a numpy call.
"""
from __future__ import annotations

import secrets

import numpy as np

_BLOCK = 4096


def fresh_seed() -> int:
    """A 63-bit seed from system entropy (for runs without ``--seed``)."""
    return secrets.randbits(63)


class Rng:
    def __init__(self, seed: int | np.random.SeedSequence = 0):
        self._seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
        self.gen = np.random.Generator(np.random.Philox(self._seq))
        self._buf = np.empty(0)
        self._pos = 0

    def spawn(self, n: int) -> list["Rng"]:
        """Independent child streams; children depend only on the seed and their position."""
        return [Rng(s) for s in self._seq.spawn(n)]

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.gen.random(_BLOCK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)

    def uniforms(self, n: int) -> np.ndarray:
        return self.gen.random(n)

    def integers(self, n: int, size: int) -> np.ndarray:
        return self.gen.integers(0, n, size=size)


def derive_seeds(master: int, n: int) -> list[int]:
    """``n`` 63-bit seeds derived deterministically from ``master``."""
    children = np.random.SeedSequence(int(master)).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in children]
