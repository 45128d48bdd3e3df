"""Streaming Gaussian projection.

The k-by-n projection of the data accumulates chunk by chunk: each global
row i contributes the outer product of its Gaussian vector g_i and the row,
and g_i is addressed by (seed, i) through the counter-based generator, so
the projection does not depend on chunk boundaries or thread count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio, rng
from .errors import DataError, UsageError


@dataclass(frozen=True)
class SketchResult:
    """A k-by-n Gaussian projection and the seed its rows derive from."""

    entries: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        if self.entries.ndim != 2:
            raise UsageError("sketch entries must be a 2-D array")
        if not np.isfinite(self.entries).all():
            raise DataError("non-finite sketch entries")
        self.entries.setflags(write=False)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def save(self, path):
        matio.write_matrix(path, self.entries)
        sidecar = {"kind": "sketch", "k": self.k, "n": self.n, "seed": self.seed}
        Path(f"{path}.json").write_text(json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SketchResult":
        meta = json.loads(Path(f"{path}.json").read_text())
        if meta.get("kind") != "sketch":
            raise DataError(f"{path} is not a saved sketch")
        return cls(entries=matio.read_matrix(path), seed=int(meta["seed"]))


def default_sketch_rows(r_max: int) -> int:
    """Default number of projection rows for a maximum separation rank."""
    return math.ceil(2.0 * r_max * math.log(max(r_max, 2)))


def sketch_chunk(chunk: matio.RowChunk, k: int, seed: int, *,
                 gaussian_rows_fn=None) -> SketchResult:
    """Projection contribution of one chunk.

    ``gaussian_rows_fn`` is a test hook replacing the per-row Gaussian
    generator; it must accept (seed, row_offset, rows, k).
    """
    if k < 1:
        raise UsageError(f"sketch rows must be >= 1, got {k}")
    fn = gaussian_rows_fn if gaussian_rows_fn is not None else rng.gaussian_rows
    g = fn(seed, chunk.row_offset, chunk.rows, k)
    return SketchResult(entries=g.T @ chunk.data, seed=seed)


def merge(s1: SketchResult, s2: SketchResult) -> SketchResult:
    """Entrywise sum of two partial projections of the same stream."""
    if s1.seed != s2.seed:
        raise UsageError(f"seed mismatch: {s1.seed} vs {s2.seed}")
    if s1.entries.shape != s2.entries.shape:
        raise UsageError(
            f"shape mismatch: {s1.entries.shape} vs {s2.entries.shape}"
        )
    return SketchResult(entries=s1.entries + s2.entries, seed=s1.seed)


def scale_columns(s: SketchResult, stats) -> SketchResult:
    """Rescale to the projection of the column-normalized data.

    Dividing column j by the l1 norm of data column j equals sketching the
    normalized matrix, so normalization costs nothing after the pass.
    """
    norms = np.asarray(stats.l1, dtype=np.float64)
    if norms.shape != (s.n,):
        raise UsageError("column stats do not match sketch width")
    zero = np.nonzero(norms <= 0.0)[0]
    if zero.size:
        cols = ", ".join(str(int(j)) for j in zero)
        raise DataError(f"column {cols} has zero norm")
    return SketchResult(entries=s.entries / norms, seed=s.seed)
