"""Counter-based random streams.

A stream is a Philox generator keyed by ``(seed, key...)``.  The key is a
tuple of non-negative integers (experiment tag, block index, ...) so any cell
of a Monte Carlo run can be regenerated in isolation, independent of worker
scheduling.
"""
import hashlib

import numpy as np

__all__ = ["RandomStream", "tag"]

_U64 = (1 << 64) - 1


def tag(name):
    """Stable 32-bit integer for a textual experiment id."""
    h = hashlib.blake2b(name.encode("utf8"), digest_size=4).digest()
    return int.from_bytes(h, "little")


class RandomStream:
    """Keyed Philox stream.

    >>> s = RandomStream(7, (1, 2))
    >>> bool((s.uniform(3) == RandomStream(7, (1, 2)).uniform(3)).all())
    True
    """

    def __init__(self, seed, key=()):
        seed = int(seed)
        if seed < 0 or seed > _U64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        key = tuple(tag(k) if isinstance(k, str) else int(k) for k in key)
        if any(k < 0 for k in key):
            raise ValueError("stream key entries must be non-negative")
        self.seed = seed
        self.key = key

    def child(self, *key):
        return RandomStream(self.seed, self.key + key)

    def generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def uniform(self, shape):
        """Fresh uniforms on [0, 1); the same call always returns the same array."""
        return self.generator().random(shape)

    def normal(self, shape):
        return self.generator().standard_normal(shape)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"
