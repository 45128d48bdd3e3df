# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counter-based random block kernels.

Semantics are identical to the pure-numpy fallback in ``_kernels_py``: the
value at a given (stream, counter) pair never depends on how the block is
split across calls, which is what makes downstream results independent of
chunk boundaries and thread counts.
"""

from libc.math cimport cos, log, sqrt
from libc.stdint cimport uint64_t

import numpy as np

BACKEND = "compiled"

cdef double TWO_PI = 6.283185307179586476925286766559
cdef double INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    # splitmix64 finalizer
    z ^= z >> 30
    z *= <uint64_t>0xBF58476D1CE4E5B9
    z ^= z >> 27
    z *= <uint64_t>0x94D049BB133111EB
    z ^= z >> 31
    return z


cdef inline uint64_t _word(uint64_t stream, uint64_t ctr) noexcept nogil:
    return _mix(stream + (ctr + 1) * <uint64_t>0x9E3779B97F4A7C15)


def uniform_block(stream, start, count):
    """Uniform [0, 1) doubles at counters start .. start+count-1."""
    cdef uint64_t s = stream
    cdef uint64_t c0 = start
    cdef Py_ssize_t n = count
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] buf = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            buf[i] = <double>(_word(s, c0 + i) >> 11) * INV_2_53
    return out


def normal_block(stream, start, count):
    """Standard normal doubles at indices start .. start+count-1.

    Index j consumes the uniform words at counters 2j and 2j+1 (Box-Muller,
    cosine branch), so any block split reproduces the same values.
    """
    cdef uint64_t s = stream
    cdef uint64_t j0 = start
    cdef Py_ssize_t n = count
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] buf = out
    cdef Py_ssize_t i
    cdef uint64_t j
    cdef double u1, u2
    with nogil:
        for i in range(n):
            j = j0 + i
            u1 = (<double>(_word(s, 2 * j) >> 11) + 0.5) * INV_2_53
            u2 = <double>(_word(s, 2 * j + 1) >> 11) * INV_2_53
            buf[i] = sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
    return out
