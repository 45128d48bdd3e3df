"""Single-pass tall-and-skinny QR with fused column statistics and sketching.

Row chunks are orthogonalized independently into small triangular factors,
which combine associatively (QR of a stacked pair), so one traversal of the
data yields the n-by-n factor R, the per-column l1/l2 norms, and optionally
a Gaussian projection. The Gram matrix is never formed. A deterministic
combine tree makes results independent of thread count.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import matio, sketch as sketch_mod
from .errors import DataError, UsageError

COMBINE_ORDERS = ("tree", "sequential", "first-come")


@dataclass(frozen=True)
class TriangularFactor:
    """Upper-triangular n-by-n factor with nonnegative diagonal.

    The sign convention (rows flipped so every diagonal entry is >= 0) makes
    the factor of a given matrix unique up to round-off, which is what lets
    chunked and dense computations be compared entrywise.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise UsageError(f"triangular factor must be square, got {e.shape}")
        if np.tril(e, -1).any():
            raise UsageError("triangular factor has nonzero entries below the diagonal")
        if (np.diagonal(e) < 0).any():
            raise UsageError("triangular factor has a negative diagonal entry")
        e.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def save(self, path):
        matio.write_matrix(path, self.entries)
        sidecar = {"kind": "triangular_factor", "n": self.n}
        Path(f"{path}.json").write_text(json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "TriangularFactor":
        meta = json.loads(Path(f"{path}.json").read_text())
        if meta.get("kind") != "triangular_factor":
            raise DataError(f"{path} is not a saved triangular factor")
        return cls(entries=matio.read_matrix(path))


@dataclass(frozen=True)
class ColumnStats:
    """Per-column l1 and l2 norms of the streamed matrix."""

    l1: np.ndarray = field(repr=False)
    l2: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.l1.setflags(write=False)
        self.l2.setflags(write=False)

    @property
    def n(self) -> int:
        return self.l1.shape[0]

    def norms(self, kind: str) -> np.ndarray:
        if kind == "l1":
            return self.l1
        if kind == "l2":
            return self.l2
        raise UsageError(f"unknown norm kind {kind!r}")

    def save(self, path):
        matio.write_matrix(path, np.vstack([self.l1, self.l2]))
        sidecar = {"kind": "column_stats", "n": self.n, "rows": ["l1", "l2"]}
        Path(f"{path}.json").write_text(json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ColumnStats":
        meta = json.loads(Path(f"{path}.json").read_text())
        if meta.get("kind") != "column_stats":
            raise DataError(f"{path} is not saved column stats")
        both = matio.read_matrix(path)
        return cls(l1=both[0].copy(), l2=both[1].copy())


@dataclass(frozen=True)
class ReducedSVD:
    """Singular values and right singular vectors of a triangular factor."""

    singular_values: np.ndarray = field(repr=False)
    right_vectors: np.ndarray = field(repr=False)

    def reduced_matrix(self) -> np.ndarray:
        """The n-by-n matrix handed to column selection in the SVD route."""
        return self.singular_values[:, None] * self.right_vectors


def _fix_signs(r: np.ndarray) -> np.ndarray:
    flip = np.diagonal(r) < 0
    if flip.any():
        r = r.copy()
        r[flip, :] = -r[flip, :]
    return r


def _pad_square(r: np.ndarray, n: int) -> np.ndarray:
    if r.shape[0] == n:
        return r
    out = np.zeros((n, n))
    out[: r.shape[0], :] = r
    return out


def factor_chunk(chunk) -> TriangularFactor:
    """Triangular factor of one row chunk (Householder QR, sign-fixed)."""
    data = chunk.data if isinstance(chunk, matio.RowChunk) else np.asarray(chunk, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise UsageError(f"chunk must have at least one row, got shape {data.shape}")
    c, n = data.shape
    if c == 1:
        row = data[0].copy()
        if row[0] < 0:
            row = -row
        return TriangularFactor(entries=_pad_square(row[None, :], n))
    r = np.linalg.qr(data, mode="r")
    return TriangularFactor(entries=_pad_square(_fix_signs(r), n))


def combine(r1: TriangularFactor, r2: TriangularFactor) -> TriangularFactor:
    """Triangular factor of the vertical stack of two factors."""
    if r1.n != r2.n:
        raise UsageError(f"dimension mismatch: {r1.n} vs {r2.n}")
    if not r1.entries.any():
        return r2
    if not r2.entries.any():
        return r1
    stacked = np.vstack([r1.entries, r2.entries])
    return TriangularFactor(entries=_fix_signs(np.linalg.qr(stacked, mode="r")))


def rsvd(r: TriangularFactor) -> ReducedSVD:
    """SVD of the triangular factor; equals the SVD of the streamed matrix
    up to the implicit left factor."""
    _, s, vt = np.linalg.svd(r.entries)
    return ReducedSVD(singular_values=s, right_vectors=vt)


def apply_column_scaling(r: TriangularFactor, stats: ColumnStats,
                         norm_kind: str = "l1") -> TriangularFactor:
    """Divide column j by the matching data column norm.

    The result is the triangular factor of the column-normalized data, so
    normalization never touches the big matrix.
    """
    norms = stats.norms(norm_kind)
    if norms.shape != (r.n,):
        raise UsageError("column stats do not match factor dimension")
    zero = np.nonzero(norms <= 0.0)[0]
    if zero.size:
        cols = ", ".join(str(int(j)) for j in zero)
        raise DataError(f"column {cols} has zero norm")
    return TriangularFactor(entries=r.entries / norms)


# ---------------------------------------------------------------------------
# Fused single-pass streaming


@dataclass(frozen=True)
class _StatsAcc:
    l1: np.ndarray
    sumsq: np.ndarray

    @classmethod
    def from_block(cls, data: np.ndarray) -> "_StatsAcc":
        return cls(l1=np.abs(data).sum(axis=0),
                   sumsq=np.einsum("ij,ij->j", data, data))

    def merge(self, other: "_StatsAcc") -> "_StatsAcc":
        return _StatsAcc(l1=self.l1 + other.l1, sumsq=self.sumsq + other.sumsq)

    def finalize(self) -> ColumnStats:
        return ColumnStats(l1=self.l1, l2=np.sqrt(self.sumsq))


class TreeReducer:
    """Binary-counter pairwise reduction.

    Pushing items in index order reproduces a balanced binary tree over the
    index sequence, so serial and thread-parallel runs combine partial
    results in exactly the same order.
    """

    def __init__(self, combine_fn):
        self._fn = combine_fn
        self._levels: list = []

    def push(self, item):
        level = 0
        while level < len(self._levels) and self._levels[level] is not None:
            item = self._fn(self._levels[level], item)
            self._levels[level] = None
            level += 1
        if level == len(self._levels):
            self._levels.append(item)
        else:
            self._levels[level] = item

    def result(self):
        acc = None
        for item in self._levels:
            if item is None:
                continue
            acc = item if acc is None else self._fn(item, acc)
        return acc

    @property
    def depth(self) -> int:
        return len(self._levels)


@dataclass(frozen=True)
class StreamResult:
    factor: TriangularFactor
    stats: ColumnStats
    sketch: sketch_mod.SketchResult | None
    rows: int
    chunks: int
    tree_depth: int


def _ordered_map(fn, items, threads: int):
    if threads <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        pending: deque = deque()
        for item in items:
            pending.append(ex.submit(fn, item))
            if len(pending) >= 2 * threads:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def _unordered_map(fn, items, threads: int):
    with ThreadPoolExecutor(max_workers=threads) as ex:
        pending = set()
        for item in items:
            pending.add(ex.submit(fn, item))
            if len(pending) >= 2 * threads:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    yield fut.result()
        while pending:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for fut in done:
                yield fut.result()


def stream_pass(chunks: Iterable[matio.RowChunk], *, sketch_rows: int | None = None,
                seed: int = 0, combine_order: str = "tree",
                threads: int = 1) -> StreamResult:
    """One traversal of a chunk stream.

    Returns the triangular factor, the column norms, and (when
    ``sketch_rows`` is given) the Gaussian projection, all accumulated in the
    same pass. ``combine_order`` selects the reduction: "tree" (default,
    deterministic for any thread count), "sequential" (left fold), or
    "first-come" (combine on completion; lower latency, not reproducible
    across runs when threads > 1).

    Parameters
    ----------
    chunks : iterable of RowChunk covering the matrix rows in order.
    sketch_rows : rows of the fused Gaussian projection, or None to skip it.
    seed : seed for the projection stream.
    """
    if combine_order not in COMBINE_ORDERS:
        raise UsageError(f"combine_order must be one of {COMBINE_ORDERS}")
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")

    def work(chunk: matio.RowChunk):
        factor = factor_chunk(chunk)
        acc = _StatsAcc.from_block(chunk.data)
        sk = None
        if sketch_rows is not None:
            sk = sketch_mod.sketch_chunk(chunk, sketch_rows, seed)
        return factor, acc, sk, chunk.rows

    def merge_nodes(a, b):
        fa, aa, sa, ra = a
        fb, ab, sb, rb = b
        merged = None if sa is None else sketch_mod.merge(sa, sb)
        return combine(fa, fb), aa.merge(ab), merged, ra + rb

    n_chunks = 0
    depth = 0
    if combine_order == "first-come" and threads > 1:
        node = None
        for result in _unordered_map(work, chunks, threads):
            n_chunks += 1
            node = result if node is None else merge_nodes(node, result)
    else:
        reducer = TreeReducer(merge_nodes)
        results = _ordered_map(work, chunks, threads)
        if combine_order == "sequential":
            node = None
            for result in results:
                n_chunks += 1
                node = result if node is None else merge_nodes(node, result)
        else:
            for result in results:
                n_chunks += 1
                reducer.push(result)
            node = reducer.result()
            depth = reducer.depth

    if node is None:
        raise DataError("empty chunk stream")
    factor, acc, sk, rows = node
    if rows < factor.n:
        raise DataError(
            f"not tall-and-skinny: m = {rows} < n = {factor.n}"
        )
    return StreamResult(factor=factor, stats=acc.finalize(), sketch=sk,
                        rows=rows, chunks=n_chunks, tree_depth=depth)
