"""Seedable, platform-independent random stream.

The generator is xoshiro256** seeded through SplitMix64. Its state is a
``uint64[4]`` numpy array so that the compiled kernels and the pure-Python
fallback can advance the very same stream in place.

Derived variates
----------------
* ``uniform``: ``(x >> 11) * 2**-53``, in ``[0, 1)``.
* ``bounded(m)``: Lemire's multiply-shift with rejection, exactly uniform on
  ``{0, ..., m-1}``.
* ``normal``: Box-Muller on pairs ``(u1, u2)`` of uniforms, radius from
  ``1 - u1``; both the cosine and the sine branch are used, in that order.
* ``permutation(n)``: Fisher-Yates, ``i = n-1 .. 1`` swapping ``a[i]`` with
  ``a[bounded(i+1)]``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_sequence(seed: int, count: int) -> list[int]:
    x = seed & MASK64
    out = []
    for _ in range(count):
        x = (x + GOLDEN) & MASK64
        out.append(_mix64(x))
    return out


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for worker/trial ``index`` of a master seed."""
    return _mix64((master_seed + GOLDEN * (index + 1)) & MASK64)


def seed_state(seed: int) -> np.ndarray:
    state = np.array(splitmix64_sequence(seed, 4), dtype=np.uint64)
    if not state.any():  # xoshiro's only forbidden state
        state[0] = 1
    return state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def next_word(state: np.ndarray) -> int:
    """Advance ``state`` in place and return the next 64-bit word."""
    s0, s1, s2, s3 = (int(v) for v in state)
    result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
    t = (s1 << 17) & MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return result


def bounded(state: np.ndarray, m: int) -> int:
    if m <= 0:
        raise ValueError("bound must be positive")
    x = next_word(state)
    prod = x * m
    low = prod & MASK64
    if low < m:
        threshold = ((1 << 64) - m) % m
        while low < threshold:
            x = next_word(state)
            prod = x * m
            low = prod & MASK64
    return prod >> 64


def permutation(state: np.ndarray, n: int) -> np.ndarray:
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = bounded(state, i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


class Stream:
    """Convenience wrapper around a xoshiro256** state array.

    Bulk draws (``uniform``, ``normal``) go through the active backend so
    they are fast when the compiled kernels are available; the resulting
    numbers do not depend on the backend.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.state = seed_state(self.seed)

    @classmethod
    def from_state(cls, state: np.ndarray) -> "Stream":
        obj = cls.__new__(cls)
        obj.seed = None
        obj.state = np.array(state, dtype=np.uint64, copy=True)
        return obj

    def copy(self) -> "Stream":
        return Stream.from_state(self.state)

    def next_word(self) -> int:
        return next_word(self.state)

    def words(self, count: int) -> np.ndarray:
        from seglab._backend import backend

        return backend.raw_words(self.state, int(count))

    def bounded(self, m: int) -> int:
        return bounded(self.state, m)

    def permutation(self, n: int) -> np.ndarray:
        from seglab._backend import backend

        return backend.permutation(self.state, int(n))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        count = 1 if size is None else int(np.prod(size))
        u = (self.words(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        count = 1 if size is None else int(np.prod(size))
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        angle = 2.0 * math.pi * u[:, 1]
        z = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
        z = z[:count]
        return float(z[0]) if size is None else z.reshape(size)
