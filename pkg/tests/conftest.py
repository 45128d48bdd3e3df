import numpy as np
import pytest
from hypothesis import settings

import tsnmf

settings.register_profile("numeric", deadline=None, max_examples=30)
settings.load_profile("numeric")


def signfixed_r(x: np.ndarray) -> np.ndarray:
    """Dense QR oracle: triangular factor with the nonnegative-diagonal
    convention, computed directly from the full matrix."""
    r = np.linalg.qr(np.asarray(x, dtype=np.float64), mode="r")
    flip = np.diagonal(r) < 0
    r = r.copy()
    r[flip, :] = -r[flip, :]
    n = x.shape[1]
    if r.shape[0] < n:
        r = np.vstack([r, np.zeros((n - r.shape[0], n))])
    return r


def chunks_of(x: np.ndarray, size: int):
    """Split a dense matrix into RowChunks of at most `size` rows."""
    for off in range(0, x.shape[0], size):
        yield tsnmf.RowChunk(row_offset=off, data=x[off : off + size])


@pytest.fixture
def tmp_matrix(tmp_path):
    def write(arr, name="m.tsm"):
        path = tmp_path / name
        tsnmf.write_matrix(path, arr)
        return path

    return write
