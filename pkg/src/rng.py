"""
SplitMix64: the only source of randomness in the simulator. Sequences are portable: the n-th word of
a stream seeded with s is mix(s + n * GOLDEN_GAMMA) for n = 1, 2, ..., so the vectorised draws below
produce exactly the same words as the scalar next_u64() loop.
"""
from typing import List

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
TWO_POW_64 = 2.0 ** 64

_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 output function on a single 64-bit state value."""
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2^64, which is what the mixer needs.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Seeded 64-bit generator. Not thread-safe; give every worker its own stream."""

    def __init__(self, seed: int) -> None:
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def words(self, n: int) -> np.ndarray:
        """Next n words as a uint64 array."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
            states = steps + np.uint64(self.state)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return _mix64_array(states)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Words mapped to floats by division by 2^64, then scaled to [low, high]."""
        unit = self.words(n).astype(np.float64) / TWO_POW_64
        return low + (high - low) * unit

    def normal(self, n: int) -> np.ndarray:
        """
        Standard normals by Box-Muller on consecutive word pairs (u1, u2): each pair yields
        r*cos(2*pi*u2) then r*sin(2*pi*u2), interleaved. Odd n drops the last sine.
        """
        if n <= 0:
            return np.zeros(0, dtype=np.float64)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1 = np.maximum(u[0::2], 1.0 / TWO_POW_64)
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def below(self, bound: int) -> int:
        """floor(u / 2^64 * bound) computed exactly in integers."""
        return (self.next_u64() * bound) >> 64

    def indices(self, n: int, bound: int) -> List[int]:
        """n draws of below(bound), with replacement."""
        return [(int(w) * bound) >> 64 for w in self.words(n)]

    def permutation(self, n: int) -> np.ndarray:
        """Indices 0..n-1 ordered by one fresh word each (stable sort on ties)."""
        return np.argsort(self.words(n), kind="stable")


def derive_seed(master_seed: int, client_id: int, round_index: int) -> int:
    """
    Seed of one client's stream in one round: first SplitMix64 output of
    master ^ client_id ^ (round_index * GOLDEN_GAMMA). Adding clients never changes existing streams.
    """
    base = (int(master_seed) ^ int(client_id) ^ ((int(round_index) * GOLDEN_GAMMA) & MASK64)) & MASK64
    return SplitMix64(base).next_u64()


# Salts keep the per-purpose streams of one master seed apart.
INIT_SALT = 0x696E6974
DATA_SALT = 0x64617461
NOISE_SALT = 0x6E6F697365
FACTOR_SALT = 0x666163746F72
