"""Pure-numpy fallback for the compiled random block kernels.

Must stay value-compatible with ``_kernels.pyx``: both evaluate the same
hash and the same Box-Muller expression, so results agree to the last bits
the platform libm delivers (exactly, for the uniform words).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 6.283185307179586476925286766559
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _words(stream: int, start: int, count: int) -> np.ndarray:
    ctr = np.arange(count, dtype=np.uint64) + np.uint64((start + 1) & 0xFFFFFFFFFFFFFFFF)
    return _mix(np.uint64(stream) + ctr * _GAMMA)


def uniform_block(stream: int, start: int, count: int) -> np.ndarray:
    """Uniform [0, 1) doubles at counters start .. start+count-1."""
    return (_words(stream, start, count) >> np.uint64(11)).astype(np.float64) * _INV_2_53


def normal_block(stream: int, start: int, count: int) -> np.ndarray:
    """Standard normal doubles at indices start .. start+count-1."""
    w = _words(stream, 2 * start, 2 * count)
    u = (w >> np.uint64(11)).astype(np.float64)
    u1 = (u[0::2] + 0.5) * _INV_2_53
    u2 = u[1::2] * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
