"""Counter-based random streams.

Every value is addressed by (seed, stream tag, counter), so generation is
reproducible regardless of chunk sizes, traversal order, or thread count.
Distinct components of one logical model (e.g. the basis, coefficient and
noise blocks of a synthetic matrix) draw from independently derived streams.
"""

from __future__ import annotations

import numpy as np

from . import kernels

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

# Stream tags. Values are arbitrary but frozen: changing them changes every
# generated matrix and sketch.
TAG_SKETCH = 0
TAG_BASIS = 1
TAG_COEFF = 2
TAG_NOISE = 3


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_stream(seed: int, tag: int) -> int:
    """Mix a user seed and a stream tag into an internal stream id."""
    return _mix((seed & _MASK) ^ _mix((tag + _GAMMA) & _MASK))


def uniforms(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Uniform [0,1) block at counters start..start+count-1 of one stream."""
    return kernels.uniform_block(derive_stream(seed, tag), start & _MASK, count)


def normals(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Standard normal block at indices start..start+count-1 of one stream."""
    return kernels.normal_block(derive_stream(seed, tag), start & _MASK, count)


def gaussian_rows(seed: int, row_offset: int, rows: int, k: int) -> np.ndarray:
    """Per-row Gaussian vectors for global rows [row_offset, row_offset+rows).

    Row i of the result depends only on (seed, row_offset + i): entry t is
    normal index (row_offset + i) * k + t of the sketch stream.
    """
    flat = normals(seed, TAG_SKETCH, row_offset * k, rows * k)
    return flat.reshape(rows, k)
