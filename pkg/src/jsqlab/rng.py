"""Seeded random streams.

A stream is identified by (master seed, key tuple). Keys are small integer
counters: ``(replication, purpose, index)``. The pair feeds numpy's
``SeedSequence(entropy=seed, spawn_key=key)``, so every stream is a pure
function of its address and replications can run in any order or thread.

Uniforms are served from a buffer refilled in fixed chunks; drawing n values
at once or one at a time consumes the generator identically.
"""
from __future__ import annotations

import numpy as np

CHUNK = 4096

# purpose codes inside a replication
ARRIVALS = 0
SELECTION = 1
SERVICE = 2
TIES = 3
AUX = 4


class RngStream:
    __slots__ = ("seed", "key", "_gen", "_buf", "_pos")

    def __init__(self, seed: int, key=()):
        self.seed = int(seed) & (2**64 - 1)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._buf = np.empty(0)
        self._pos = 0

    def child(self, *key) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(key))

    def _refill(self):
        self._buf = self._gen.random(CHUNK)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._buf.shape[0]:
                self._refill()
            take = min(n - filled, self._buf.shape[0] - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n) from one uniform."""
        return min(int(self.uniform() * n), n - 1)


class SampleBuffer:
    """Chunked variates of one law from one stream."""

    __slots__ = ("dist", "rng", "chunk", "_vals", "_pos")

    def __init__(self, dist, rng: RngStream, chunk: int = 1024):
        self.dist = dist
        self.rng = rng
        self.chunk = chunk
        self._vals: list = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._vals):
            self._vals = self.dist.sample_many(self.rng, self.chunk).tolist()
            self._pos = 0
        v = self._vals[self._pos]
        self._pos += 1
        return v

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            out[i] = self.next()
        return out


def replication_stream(seed: int, rep: int, purpose: int, index: int = 0) -> RngStream:
    return RngStream(seed, (rep, purpose, index))
