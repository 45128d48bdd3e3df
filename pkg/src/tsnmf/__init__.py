"""Single-pass separable NMF for tall-and-skinny matrices.

One traversal of the data produces an n-by-n triangular factor, per-column
norms, and (optionally) a Gaussian projection; extreme-column selection,
nonnegative least squares, and residual sweeps then run on the reduced data
alone.
"""

from .errors import DataError, NumericalError, TsnmfError, UsageError
from .kernels import get_backend
from .matio import (
    ChunkReader,
    MatrixHeader,
    MatrixWriter,
    RowChunk,
    SyntheticSpec,
    SyntheticTruth,
    TextChunkReader,
    expand_kronecker,
    generate_separable,
    open_chunk_reader,
    read_matrix,
    write_matrix,
    write_text_matrix,
)
from .nnls import (
    CoefficientMatrix,
    NnlsIterationError,
    SweepReport,
    compute_h,
    kkt_terms,
    nnls_solve,
    relative_residual,
    sweep,
)
from .select import ExtremeSet, gp_select, spa, xray_greedy
from .sketch import SketchResult, default_sketch_rows, sketch_chunk, scale_columns
from .sketch import merge as merge_sketches
from .tsqr import (
    ColumnStats,
    ReducedSVD,
    StreamResult,
    TriangularFactor,
    apply_column_scaling,
    combine,
    factor_chunk,
    rsvd,
    stream_pass,
)

__version__ = "0.1.0"

__all__ = [
    "ChunkReader",
    "CoefficientMatrix",
    "ColumnStats",
    "DataError",
    "ExtremeSet",
    "MatrixHeader",
    "MatrixWriter",
    "NnlsIterationError",
    "NumericalError",
    "ReducedSVD",
    "RowChunk",
    "SketchResult",
    "StreamResult",
    "SweepReport",
    "SyntheticSpec",
    "SyntheticTruth",
    "TextChunkReader",
    "TriangularFactor",
    "TsnmfError",
    "UsageError",
    "apply_column_scaling",
    "combine",
    "compute_h",
    "default_sketch_rows",
    "expand_kronecker",
    "factor_chunk",
    "generate_separable",
    "get_backend",
    "gp_select",
    "kkt_terms",
    "merge_sketches",
    "nnls_solve",
    "open_chunk_reader",
    "read_matrix",
    "relative_residual",
    "rsvd",
    "scale_columns",
    "sketch_chunk",
    "spa",
    "stream_pass",
    "sweep",
    "write_matrix",
    "write_text_matrix",
    "xray_greedy",
]
