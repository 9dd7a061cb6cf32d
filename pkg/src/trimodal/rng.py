"""Portable seeded random stream: xoshiro256** state seeded by splitmix64.

numpy ships no xoshiro256** bit generator, and the stream has to be
reproducible bit-for-bit everywhere, so the generator is written out here.
Bulk draws go through numba kernels; the scalar path is plain Python and is
used by the tests as a cross-check.
"""

import math

import numba
import numpy as np

_MASK = (1 << 64) - 1
_TWO_M53 = 1.0 / 9007199254740992.0


def splitmix64(x):
    """Return (next_state, output) for one splitmix64 step on a Python int."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def xoshiro_next(s):
    """Advance a 4-word state list in place and return the next u64 (pure Python)."""
    result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
    t = (s[1] << 17) & _MASK
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True)
def _rotl_nb(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _fill_u64(state, out):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    for i in range(out.shape[0]):
        out[i] = _rotl_nb(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl_nb(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


class Rng:
    """Single-owner mutable random stream.

    ``Rng(seed)`` always yields the same sequence. Doubles use the top 53 bits
    of each word; normals use Box-Muller on pairs of doubles.
    """

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed & _MASK
        x = self.seed
        words = []
        for _ in range(4):
            x, z = splitmix64(x)
            words.append(z)
        self._state = np.array(words, dtype=np.uint64)

    @property
    def state(self):
        return [int(w) for w in self._state]

    def next_u64(self):
        out = np.empty(1, dtype=np.uint64)
        _fill_u64(self._state, out)
        return int(out[0])

    def u64(self, n):
        out = np.empty(int(n), dtype=np.uint64)
        if n:
            _fill_u64(self._state, out)
        return out

    def random(self, size=None):
        """Uniform doubles in [0, 1)."""
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        vals = (self.u64(n) >> np.uint64(11)).astype(np.float64) * _TWO_M53
        return float(vals[0]) if size is None else vals.reshape(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, loc=0.0, scale=1.0, size=None):
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.random(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        z = loc + scale * z[:n]
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, n, size=None):
        """Uniform integers in [0, n) via the multiply-shift reduction on 53-bit doubles."""
        u = self.random(size)
        return np.minimum(np.floor(u * n), n - 1).astype(np.int64) if size is not None else min(int(u * n), n - 1)

    def permutation(self, n):
        """Fisher-Yates shuffle of arange(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
