"""SplitMix64 stream with Box-Muller normals.

SplitMix64 (Steele, Lea & Flood, 2014) is a counter-based generator: output i
is a fixed bijective mix of ``seed + i * GOLDEN``, so streams vectorise over
numpy uint64 and are bit-identical on every platform.
"""

import numpy as np

ALGORITHM = "splitmix64/box-muller"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(value):
    """SplitMix64 finaliser of a Python int, as a Python int."""
    return int(_mix(np.array([value & _MASK], dtype=np.uint64))[0])


class Rng:
    """Single-owner SplitMix64 stream.

    ``spawn(i)`` derives an independent child stream for worker ``i``.
    """

    algorithm = ALGORITHM

    def __init__(self, seed, stream=0):
        self.seed = int(seed) & _MASK
        self.stream = int(stream)
        if stream:
            self._state = mix64(self.seed ^ mix64(0x5851F42D4C957F2D + self.stream))
        else:
            self._state = self.seed
        self._count = 0

    def spawn(self, stream):
        return Rng(self.seed, stream=(self.stream << 20) + int(stream) + 1)

    def next_u64(self, n):
        """The next ``n`` raw 64-bit outputs."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + idx * GOLDEN
            return _mix(z)

    def uniform(self, n):
        """``n`` doubles in [0, 1) with 53 random bits each."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n):
        """``n`` standard normals by the Box-Muller transform."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1]
        u2 = u[1::2]
        rad = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = rad * np.cos(ang)
        out[1::2] = rad * np.sin(ang)
        return out[:n]

    def integers(self, low, high, n):
        """``n`` integers in [low, high), by multiply-shift on 32-bit draws."""
        span = high - low
        top = (self.next_u64(n) >> np.uint64(32)).astype(np.float64)
        return low + np.floor(top * span / 2.0**32).astype(np.int64)
