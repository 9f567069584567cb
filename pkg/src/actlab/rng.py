"""Platform-independent random streams.

Every stochastic decision in a run draws from a single xoshiro256** stream
(Blackman & Vigna). The generator is defined entirely by integer arithmetic
modulo 2**64, so a given seed yields the same draws on every platform and in
every language that implements the algorithm.

Seeding
-------
``derive_state(master_seed, stream_id)`` computes::

    z  = splitmix64_mix(master_seed) ^ splitmix64_mix(stream_id + 0x9E3779B97F4A7C15)
    s0, s1, s2, s3 = four successive splitmix64 outputs starting from z

where ``splitmix64_mix`` is the SplitMix64 finaliser and a splitmix64 output
first increments its state by the golden-ratio constant, then mixes it.
Run ``k`` of an experiment uses ``stream_id = k``.

Derived draws
-------------
``below(n)``       rejection sampling: ``t = (2**64 - n) % n``; draw ``r``
                   until ``r >= t``; return ``r % n``.
``uniform()``      ``(r >> 11) * 2**-53``, in [0, 1).
``exponential(λ)`` ``-log(1 - uniform()) / λ``.
``shuffle(a)``     Fisher-Yates from the top: for ``i = len(a)-1 .. 1``,
                   ``j = below(i + 1)``, swap ``a[i], a[j]``.

The state array carries a fifth word counting raw 64-bit draws.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_U5 = np.uint64(5)
_U9 = np.uint64(9)
_U1 = np.uint64(1)
_U0 = np.uint64(0)


def splitmix64_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_state(master_seed: int, stream_id: int = 0) -> list[int]:
    """Return the four xoshiro256** state words for ``(master_seed, stream_id)``."""
    if stream_id < 0:
        raise ValueError("stream_id must be non-negative")
    z = splitmix64_mix(master_seed & MASK64) ^ splitmix64_mix((stream_id + GOLDEN) & MASK64)
    words = []
    for _ in range(4):
        z = (z + GOLDEN) & MASK64
        words.append(splitmix64_mix(z))
    if not any(words):
        words[0] = 1
    return words


# ---------------------------------------------------------------- numba core


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    result = _rotl(s1 * _U5, 7) * _U9
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    s[4] += _U1
    return result


@njit(cache=True)
def below(s, n):
    """Uniform integer in ``[0, n)``; ``n >= 1``."""
    un = np.uint64(n)
    threshold = (_U0 - un) % un
    while True:
        r = next_u64(s)
        if r >= threshold:
            return np.int64(r % un)


@njit(cache=True)
def uniform(s):
    return np.float64(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def exponential(s, rate):
    return -math.log(1.0 - uniform(s)) / rate


@njit(cache=True)
def shuffle(s, a):
    for i in range(a.shape[0] - 1, 0, -1):
        j = below(s, i + 1)
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp


@njit(cache=True)
def permutation(s, n):
    a = np.arange(n)
    shuffle(s, a)
    return a


# ---------------------------------------------------------------- python face


class RngStream:
    """A seeded xoshiro256** stream.

    ``state`` is a ``uint64[5]`` array (four generator words plus a draw
    counter) that the compiled kernels mutate in place.
    """

    algorithm = "xoshiro256**"

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.state = np.zeros(5, dtype=np.uint64)
        self.state[:4] = np.array(derive_state(self.master_seed, self.stream_id), dtype=np.uint64)

    @property
    def draws(self) -> int:
        """Number of raw 64-bit outputs consumed so far."""
        return int(self.state[4])

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def below(self, n: int) -> int:
        if n < 1:
            raise ValueError("below() needs n >= 1")
        return int(below(self.state, n))

    def uniform(self) -> float:
        return float(uniform(self.state))

    def exponential(self, rate: float) -> float:
        if not rate > 0:
            raise ValueError("rate must be positive")
        return float(exponential(self.state, rate))

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def snapshot(self) -> np.ndarray:
        return self.state.copy()

    def restore(self, snap: np.ndarray) -> None:
        self.state[:] = snap

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id}, draws={self.draws})"
