"""Matrix storage and streaming.

Binary format: a 16-byte little-endian header (magic ``b"TS"``, version u16,
rows u64, cols u32) followed by the row-major float64 payload. A delimited
text format (one row per line) is supported for interoperability. Readers
stream fixed-size row chunks and count the rows and bytes they deliver, which
is how the single-pass contract is verified.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import rng
from .errors import DataError, UsageError

MAGIC = b"TS"
VERSION = 1
_HEADER = struct.Struct("<2sHQI")
HEADER_BYTES = _HEADER.size  # 16

DEFAULT_CHUNK_ROWS = 8192

_MAX_COLS = 2**32 - 1
_MAX_PAYLOAD = 2**63 - 1


@dataclass(frozen=True)
class MatrixHeader:
    """Shape of a stored matrix (float64, row-major)."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.cols < 1:
            raise DataError(f"matrix must have at least one column, got {self.cols}")
        if self.rows < 0:
            raise DataError(f"negative row count {self.rows}")

    @property
    def payload_bytes(self) -> int:
        return self.rows * self.cols * 8

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, self.rows, self.cols)


def _unpack_header(raw: bytes) -> MatrixHeader:
    if len(raw) < HEADER_BYTES:
        raise DataError("malformed header: file shorter than header")
    magic, version, rows, cols = _HEADER.unpack(raw[:HEADER_BYTES])
    if magic != MAGIC:
        raise DataError("malformed header: bad magic")
    if version != VERSION:
        raise DataError(f"malformed header: unsupported version {version}")
    return MatrixHeader(rows=rows, cols=cols)


@dataclass(frozen=True)
class RowChunk:
    """A contiguous block of rows; ``row_offset`` is the global index of row 0."""

    row_offset: int
    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def _check_finite(block: np.ndarray, row_offset: int):
    if np.isfinite(block).all():
        return
    bad = np.argwhere(~np.isfinite(block))[0]
    raise DataError(
        f"non-finite entry at row {row_offset + int(bad[0])}, column {int(bad[1])}"
    )


class ChunkReader:
    """Streams RowChunks from a binary matrix file.

    Parameters
    ----------
    path : file to read.
    chunk_rows : target rows per chunk; the final chunk may be shorter.
    validate : reject NaN/Inf entries (reports row and column).
    hasher : optional hashlib-style object updated with every byte read,
        header included, so a content hash costs no extra pass.

    Attributes ``rows_read`` and ``bytes_read`` accumulate across iteration;
    after a full pass ``rows_read`` equals the header row count.
    """

    def __init__(self, path, chunk_rows: int = DEFAULT_CHUNK_ROWS, *,
                 validate: bool = True, hasher=None):
        if chunk_rows < 1:
            raise UsageError(f"chunk_rows must be >= 1, got {chunk_rows}")
        self.path = Path(path)
        self.chunk_rows = chunk_rows
        self.validate = validate
        self.hasher = hasher
        self.rows_read = 0
        self.bytes_read = 0

        size = self.path.stat().st_size
        with open(self.path, "rb") as f:
            raw = f.read(HEADER_BYTES)
        self.header = _unpack_header(raw)
        expected = HEADER_BYTES + self.header.payload_bytes
        if size < expected:
            raise DataError("payload shorter than declared")
        if size > expected:
            raise DataError("payload longer than declared")

    @property
    def rows(self) -> int:
        return self.header.rows

    @property
    def cols(self) -> int:
        return self.header.cols

    def __iter__(self) -> Iterator[RowChunk]:
        n = self.header.cols
        row_bytes = n * 8
        with open(self.path, "rb") as f:
            raw = f.read(HEADER_BYTES)
            if self.hasher is not None:
                self.hasher.update(raw)
            self.bytes_read += len(raw)
            offset = 0
            while offset < self.header.rows:
                c = min(self.chunk_rows, self.header.rows - offset)
                raw = f.read(c * row_bytes)
                if len(raw) < c * row_bytes:
                    raise DataError("payload shorter than declared")
                if self.hasher is not None:
                    self.hasher.update(raw)
                self.bytes_read += len(raw)
                block = np.frombuffer(raw, dtype="<f8").reshape(c, n)
                if self.validate:
                    _check_finite(block, offset)
                self.rows_read += c
                yield RowChunk(row_offset=offset, data=block)
                offset += c


class TextChunkReader:
    """Streams RowChunks from a delimited text file (one row per line)."""

    def __init__(self, path, chunk_rows: int = DEFAULT_CHUNK_ROWS, *,
                 sep: str | None = None, validate: bool = True, hasher=None):
        if chunk_rows < 1:
            raise UsageError(f"chunk_rows must be >= 1, got {chunk_rows}")
        self.path = Path(path)
        self.chunk_rows = chunk_rows
        self.sep = sep
        self.validate = validate
        self.hasher = hasher
        self.rows_read = 0
        self.bytes_read = 0
        self.cols: int | None = None

    def _parse(self, lines: list[bytes], row_offset: int) -> np.ndarray:
        try:
            rows = [
                [float(tok) for tok in line.split(self.sep)] for line in lines
            ]
        except ValueError as exc:
            raise DataError(f"unparseable text row near row {row_offset}: {exc}") from exc
        if self.cols is None:
            self.cols = len(rows[0])
            if self.cols < 1:
                raise DataError("text matrix has an empty first row")
        if {len(r) for r in rows} != {self.cols}:
            raise DataError(f"inconsistent column count near row {row_offset}")
        block = np.asarray(rows, dtype=np.float64)
        if self.validate:
            _check_finite(block, row_offset)
        return block

    def __iter__(self) -> Iterator[RowChunk]:
        pending: list[bytes] = []
        offset = 0
        with open(self.path, "rb") as f:
            for line in f:
                if self.hasher is not None:
                    self.hasher.update(line)
                self.bytes_read += len(line)
                stripped = line.strip()
                if not stripped:
                    continue
                pending.append(stripped.decode("ascii", errors="replace"))
                if len(pending) == self.chunk_rows:
                    block = self._parse(pending, offset)
                    self.rows_read += block.shape[0]
                    yield RowChunk(row_offset=offset, data=block)
                    offset += block.shape[0]
                    pending = []
            if pending:
                block = self._parse(pending, offset)
                self.rows_read += block.shape[0]
                yield RowChunk(row_offset=offset, data=block)


def open_chunk_reader(path, chunk_rows: int = DEFAULT_CHUNK_ROWS, *,
                      validate: bool = True, hasher=None):
    """Open a binary or text matrix file, sniffing the binary magic."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head[:2] == MAGIC:
        return ChunkReader(path, chunk_rows, validate=validate, hasher=hasher)
    return TextChunkReader(path, chunk_rows, validate=validate, hasher=hasher)


class MatrixWriter:
    """Streams row blocks into a binary matrix file with a fixed header."""

    def __init__(self, path, rows: int, cols: int):
        header = MatrixHeader(rows=rows, cols=cols)
        if cols > _MAX_COLS or header.payload_bytes > _MAX_PAYLOAD:
            raise DataError("output size overflow")
        self.path = Path(path)
        self.header = header
        self._written = 0
        self._f = open(self.path, "wb")
        self._f.write(header.pack())

    def append(self, block: np.ndarray):
        block = np.ascontiguousarray(block, dtype="<f8")
        if block.ndim != 2 or block.shape[1] != self.header.cols:
            raise UsageError("block shape does not match writer columns")
        if self._written + block.shape[0] > self.header.rows:
            raise UsageError("more rows appended than declared")
        self._f.write(block.tobytes())
        self._written += block.shape[0]

    def close(self):
        self._f.close()
        if self._written != self.header.rows:
            raise DataError(
                f"writer closed after {self._written} of {self.header.rows} rows"
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._f.close()
        return False


def write_matrix(path, array: np.ndarray):
    """Write a dense 2-D array as a binary matrix file."""
    array = np.atleast_2d(np.asarray(array, dtype=np.float64))
    with MatrixWriter(path, array.shape[0], array.shape[1]) as w:
        w.append(array)


def read_matrix(path) -> np.ndarray:
    """Load a whole binary matrix file (intended for small artifacts)."""
    reader = ChunkReader(path, chunk_rows=2**22)
    parts = [chunk.data for chunk in reader]
    if not parts:
        return np.zeros((0, reader.cols))
    return np.vstack(parts)


def write_text_matrix(path, array: np.ndarray, sep: str = " "):
    array = np.atleast_2d(np.asarray(array, dtype=np.float64))
    with open(path, "w") as f:
        for row in array:
            f.write(sep.join(repr(float(v)) for v in row))
            f.write("\n")


# ---------------------------------------------------------------------------
# Synthetic separable matrices


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a planted (near-)separable matrix.

    The matrix is ``W @ [I | C] @ P (+ noise)`` where W is m-by-r and C is
    r-by-(n-r), both with Uniform[0,1) entries, P permutes columns, and the
    noise entries are Uniform[0, noise). The first r columns before
    permutation are the planted extremes.
    """

    m: int
    n: int
    r: int
    noise: float = 0.0
    seed: int = 0
    permutation: str | Sequence[int] = "paper"


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth of a generated matrix.

    ``extreme_positions[t]`` is the column where planted extreme t landed;
    ``h_true`` is the full r-by-n coefficient matrix (rows in planted order).
    """

    extreme_positions: list[int]
    h_true: np.ndarray = field(repr=False)

    @property
    def extreme_set(self) -> set[int]:
        return set(self.extreme_positions)


def _swap_permutation(n: int, r: int) -> np.ndarray:
    # Swap columns i and 10i for i = 2..r-1 (0-based); the planted extremes
    # 0..r-1 land at {0, 1} | {10i : i = 2..r-1}.
    sigma = np.arange(n)
    hi = 10 * (r - 1)
    if r > 2 and hi >= n:
        raise UsageError(
            f"paper permutation needs n > 10*(r-1) = {hi}, got n = {n}"
        )
    for i in range(2, r):
        sigma[[i, 10 * i]] = sigma[[10 * i, i]]
    return sigma


def _resolve_permutation(spec: SyntheticSpec) -> np.ndarray:
    if isinstance(spec.permutation, str):
        if spec.permutation == "identity":
            return np.arange(spec.n)
        if spec.permutation == "paper":
            return _swap_permutation(spec.n, spec.r)
        raise UsageError(f"unknown permutation {spec.permutation!r}")
    sigma = np.asarray(spec.permutation, dtype=np.int64)
    if sorted(sigma.tolist()) != list(range(spec.n)):
        raise UsageError("permutation is not a permutation of 0..n-1")
    return sigma


def generate_separable(spec: SyntheticSpec, out_path,
                       chunk_rows: int = DEFAULT_CHUNK_ROWS) -> SyntheticTruth:
    """Stream a planted separable matrix to ``out_path``.

    The matrix is written chunk-by-chunk and never materialized. Entries are
    addressed by counters, so the file is byte-identical for any chunk size.

    Returns
    -------
    SyntheticTruth with the planted extreme positions (in planted order) and
    the exact coefficient matrix of the noiseless model.
    """
    m, n, r = spec.m, spec.n, spec.r
    if r < 1 or r > n:
        raise UsageError(f"need 1 <= r <= n, got r={r}, n={n}")
    if spec.noise < 0:
        raise UsageError(f"noise magnitude must be >= 0, got {spec.noise}")
    if m < 1:
        raise UsageError(f"need m >= 1, got {m}")
    sigma = _resolve_permutation(spec)

    coeff = rng.uniforms(spec.seed, rng.TAG_COEFF, 0, r * (n - r)).reshape(r, n - r)
    base = np.hstack([np.eye(r), coeff])
    h_true = np.ascontiguousarray(base[:, sigma])
    positions = [int(np.nonzero(sigma == t)[0][0]) for t in range(r)]

    with MatrixWriter(out_path, m, n) as w:
        offset = 0
        while offset < m:
            c = min(chunk_rows, m - offset)
            wblock = rng.uniforms(spec.seed, rng.TAG_BASIS, offset * r, c * r)
            block = wblock.reshape(c, r) @ h_true
            if spec.noise > 0:
                noise = rng.uniforms(spec.seed, rng.TAG_NOISE, offset * n, c * n)
                block += spec.noise * noise.reshape(c, n)
            w.append(block)
            offset += c
    return SyntheticTruth(extreme_positions=positions, h_true=h_true)


# ---------------------------------------------------------------------------
# Kronecker pair expansion


def expand_kronecker(a_path, out_path, chunk_rows: int = DEFAULT_CHUNK_ROWS):
    """Stream the self Kronecker product of the matrix in ``a_path``.

    Output row i*m_a + j is the Kronecker product of rows i and j of A
    (entry at column p*n_a + q is A[i,p]*A[j,q]). The input is loaded dense;
    the output is streamed and never materialized.
    """
    a = read_matrix(a_path)
    m_a, n_a = a.shape
    rows, cols = m_a * m_a, n_a * n_a
    if cols > _MAX_COLS or rows * cols * 8 > _MAX_PAYLOAD:
        raise DataError("output size overflow")
    stripe = max(1, min(m_a, chunk_rows))
    with MatrixWriter(out_path, rows, cols) as w:
        for i in range(m_a):
            for j0 in range(0, m_a, stripe):
                w.append(np.kron(a[i : i + 1, :], a[j0 : j0 + stripe, :]))
    return MatrixHeader(rows=rows, cols=cols)
