"""Seeded random stream with a serializable state."""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class Rng:
    """PCG64 stream. Same seed and call sequence give the same values."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def uniform(self, low=0.0, high=1.0, shape=None, dtype=np.float32) -> np.ndarray:
        return self._gen.uniform(low, high, shape).astype(dtype)

    def integers(self, low, high, shape=None) -> np.ndarray:
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def spawn(self, key: int) -> "Rng":
        """Independent child stream derived from this stream's seed and ``key``."""
        seq = np.random.SeedSequence([self.seed, int(key) & _MASK64])
        child = Rng.__new__(Rng)
        child.seed = int(seq.generate_state(1, np.uint64)[0])
        child._gen = np.random.Generator(np.random.PCG64(seq))
        return child

    # state as six u64 words: seed, state hi/lo, inc hi/lo, has_uint32 | uinteger << 1
    def get_state(self) -> np.ndarray:
        st = self._gen.bit_generator.state
        s, inc = st["state"]["state"], st["state"]["inc"]
        packed = (int(st["has_uint32"]) & 1) | (int(st["uinteger"]) << 1)
        return np.array([self.seed, s >> 64, s & _MASK64, inc >> 64, inc & _MASK64, packed],
                        dtype=np.uint64)

    def set_state(self, words: np.ndarray) -> None:
        w = [int(v) for v in np.asarray(words, dtype=np.uint64)]
        if len(w) != 6:
            raise ValueError(f"rng state needs 6 words, got {len(w)}")
        self.seed = w[0]
        bg = np.random.PCG64()
        bg.state = {
            "bit_generator": "PCG64",
            "state": {"state": (w[1] << 64) | w[2], "inc": (w[3] << 64) | w[4]},
            "has_uint32": w[5] & 1,
            "uinteger": w[5] >> 1,
        }
        self._gen = np.random.Generator(bg)
