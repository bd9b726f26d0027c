"""Per-node random substreams.

Every random draw a node makes is a pure function of ``(run seed, node id,
stream tag, counters)``.  Draw order therefore never matters: a node's coins
are the same whether the simulator evaluates nodes one by one, in bulk, or
skips nodes that are asleep.  numpy's bit generators are sequential, so the
keyed lookup is done with the splitmix64 finalizer over uint64 arrays.
"""

from __future__ import annotations

import zlib

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _mix_int(x: int) -> int:
    return int(_mix(np.array([x & _MASK], dtype=np.uint64))[0])


def _tag(tag: str) -> int:
    return zlib.crc32(tag.encode())


class NodeRandom:
    """Keyed uniform draws for a set of nodes."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._key0 = _mix_int(self.seed ^ 0x5DEECE66D)

    def key(self, tag: str, *counters: int) -> int:
        k = self._key0 ^ _tag(tag)
        for c in counters:
            k = _mix_int(k + (int(c) & _MASK) * 0x9E3779B97F4A7C15 + 1)
        return k

    def bits(self, nodes: np.ndarray, tag: str, *counters: int) -> np.ndarray:
        k = np.uint64(self.key(tag, *counters))
        with np.errstate(over="ignore"):
            x = np.asarray(nodes, dtype=np.uint64) * _GOLD + k
        return _mix(x)

    def uniform(self, nodes: np.ndarray, tag: str, *counters: int) -> np.ndarray:
        """Uniform doubles in ``[0, 1)``, one per entry of ``nodes``."""
        return (self.bits(nodes, tag, *counters) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def first_success(self, nodes: np.ndarray, p: float, trials: int, tag: str, *counters: int) -> np.ndarray:
        """Index (1-based) of the first success in ``trials`` Bernoulli(p) coins, 0 if none.

        Inverse-transform sampling of a geometric variable; distributionally
        identical to flipping the coins one round at a time.
        """
        nodes = np.asarray(nodes)
        out = np.zeros(nodes.size, dtype=np.int64)
        if p <= 0.0 or trials <= 0 or nodes.size == 0:
            return out
        if p >= 1.0:
            out[:] = 1
            return out
        u = self.uniform(nodes, tag, *counters)
        # P(K > k) = (1-p)^k ;  K = ceil(log(1-u) / log(1-p)), K >= 1
        k = np.ceil(np.log1p(-u) / np.log1p(-p))
        k = np.maximum(k, 1.0)
        hit = k <= trials
        out[hit] = k[hit].astype(np.int64)
        return out
