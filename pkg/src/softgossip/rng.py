"""Counter-based random streams.

Every draw is addressed by (seed, tag, iteration, a, b, block): the address
is hashed into a Philox key, so identical addresses reproduce identical
values no matter in which order, or in which process, they are generated.
The two integer slots ``a``/``b`` usually carry (source, destination) for
link events or (device, 0) for per-device noise.  Values inside one address
are indexed; ``block`` partitions the index space into fixed-size chunks so
long sequences can be materialized piecewise.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 8192


def _philox_key(seed: int, tag: str, t: int, a: int, b: int, block: int) -> int:
    h = hashlib.blake2b(digest_size=16)
    raw = tag.encode("utf-8")
    h.update(struct.pack("<B", len(raw)))
    h.update(raw)
    h.update(struct.pack("<qqqqq", seed, t, a, b, block))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RandomStream:
    """Stateless stream of uniforms/normals addressed by coordinates."""

    seed: int

    def _block(self, tag: str, t: int, a: int, b: int, block: int,
               count: int, kind: str) -> np.ndarray:
        # Philox fills arrays front to back, so generating `count` values
        # yields a prefix of the full block; slicing stays bit-identical.
        key = _philox_key(self.seed, tag, t, a, b, block)
        gen = np.random.Generator(np.random.Philox(key=key))
        if kind == "uniform":
            return gen.random(count)
        if kind == "normal":
            return gen.standard_normal(count)
        raise ValueError(f"unknown draw kind: {kind!r}")

    def _values(self, tag: str, t: int, a: int, b: int,
                start: int, count: int, kind: str) -> np.ndarray:
        if count <= 0:
            return np.empty(0)
        if start < 0:
            raise ValueError("start must be nonnegative")
        first = start // BLOCK_SIZE
        last = (start + count - 1) // BLOCK_SIZE
        parts = []
        for blk in range(first, last + 1):
            lo = max(start - blk * BLOCK_SIZE, 0)
            hi = min(start + count - blk * BLOCK_SIZE, BLOCK_SIZE)
            vals = self._block(tag, t, a, b, blk, hi, kind)
            parts.append(vals[lo:hi])
        if len(parts) == 1:
            return parts[0]
        return np.concatenate(parts)

    def uniforms(self, tag: str, t: int = 0, a: int = 0, b: int = 0,
                 start: int = 0, count: int = 1) -> np.ndarray:
        """Uniform [0, 1) values at indices [start, start+count)."""
        return self._values(tag, t, a, b, start, count, "uniform")

    def normals(self, tag: str, t: int = 0, a: int = 0, b: int = 0,
                start: int = 0, count: int = 1) -> np.ndarray:
        """Standard normal values at indices [start, start+count)."""
        return self._values(tag, t, a, b, start, count, "normal")
