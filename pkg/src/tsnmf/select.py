"""Extreme-column selection on reduced matrices.

All three selectors run on n-by-n (or k-by-n) data: the successive
projection algorithm and the greedy residual-ray algorithm consume a
triangular factor or its SVD image, the Gaussian route consumes the
column-scaled projection. Ties always break toward the lowest column index,
which makes every selection deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnls as nnls_mod
from .errors import NumericalError, UsageError
from .sketch import SketchResult

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ExtremeSet:
    """Selected column indices, in selection order."""

    algorithm: str
    indices: tuple[int, ...]
    requested: int
    shortfall: int = 0

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise UsageError("extreme set contains duplicate indices")

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "r": self.requested,
            "indices": list(self.indices),
            "shortfall": self.shortfall,
        }


def as_matrix(reduced) -> np.ndarray:
    """Accept a TriangularFactor, a ReducedSVD, or a plain array."""
    if hasattr(reduced, "reduced_matrix"):
        return np.asarray(reduced.reduced_matrix(), dtype=np.float64)
    if hasattr(reduced, "entries"):
        return np.asarray(reduced.entries, dtype=np.float64)
    return np.asarray(reduced, dtype=np.float64)


def _check_rank(r: int, n: int):
    if r < 1:
        raise UsageError(f"rank must be >= 1, got {r}")
    if r > n:
        raise UsageError(f"rank {r} exceeds column count {n}")


def _spa_sequence(m: np.ndarray, r: int) -> list[int]:
    """Selection order of the successive projection algorithm.

    Stops early (returning fewer than r indices) once the deflated matrix is
    numerically zero.
    """
    work = np.array(m, dtype=np.float64, copy=True)
    n = work.shape[1]
    sq = np.einsum("ij,ij->j", work, work)
    # Deflation can only shrink norms; anything this far below the initial
    # maximum is round-off debris, not signal.
    floor = sq.max() * (100 * n * _EPS) ** 2
    chosen: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for _ in range(r):
        sq = np.einsum("ij,ij->j", work, work)
        masked = np.where(taken, -np.inf, sq)
        j = int(np.argmax(masked))
        if not np.isfinite(masked[j]) or masked[j] <= floor:
            break
        chosen.append(j)
        taken[j] = True
        u = work[:, j].copy()
        work -= np.outer(u, u @ work) / (u @ u)
    return chosen


def spa(reduced, r: int, *, normalize: bool = False, stats=None) -> ExtremeSet:
    """Successive projection: repeatedly take the max-norm column and
    project it out.

    With ``normalize`` the columns are first divided by the l1 norms of the
    original data columns (``stats`` is required for that: the reduced
    matrix does not preserve l1 norms).
    """
    m = as_matrix(reduced)
    _check_rank(r, m.shape[1])
    if normalize:
        if stats is None:
            raise UsageError("normalize=True requires column stats")
        norms = np.asarray(stats.l1, dtype=np.float64)
        bad = np.nonzero(norms <= 0.0)[0]
        if bad.size:
            cols = ", ".join(str(int(j)) for j in bad)
            raise NumericalError(f"column {cols} has zero norm")
        m = m / norms
    chosen = _spa_sequence(m, r)
    if len(chosen) < r:
        err = NumericalError(
            f"residual matrix numerically zero after {len(chosen)} of {r} selections"
        )
        err.achieved = len(chosen)
        err.partial = tuple(chosen)
        raise err
    return ExtremeSet(algorithm="spa", indices=tuple(chosen), requested=r)


def _xray_sequence(m: np.ndarray, r: int, *, tol: float = 1e-8) -> list[int]:
    """Greedy residual-ray selection order with full coefficient refits.

    Scores every unselected column by the norm of the residual's projection
    onto it, normalized by the fixed column norm; after each selection the
    coefficients over the selected set are refit by nonnegative least
    squares and the residual is rebuilt.
    """
    n = m.shape[1]
    norms = np.linalg.norm(m, axis=0)
    selectable = norms > 0.0
    chosen: list[int] = []
    residual = m
    for _ in range(r):
        scores = np.linalg.norm(residual.T @ m, axis=0)
        scores = np.divide(scores, norms, out=np.full(n, -np.inf), where=selectable)
        scores[chosen] = -np.inf
        j = int(np.argmax(scores))
        if not np.isfinite(scores[j]):
            break
        chosen.append(j)
        h = nnls_mod.solve_columns(m[:, chosen], m, tol=tol)
        residual = m - m[:, chosen] @ h
    return chosen


def xray_greedy(reduced, r: int, *, tol: float = 1e-8) -> ExtremeSet:
    """Greedy conical-hull selection on an unnormalized reduced matrix."""
    m = as_matrix(reduced)
    _check_rank(r, m.shape[1])
    chosen = _xray_sequence(m, r, tol=tol)
    if len(chosen) < r:
        err = NumericalError(
            f"no selectable column after {len(chosen)} of {r} selections"
        )
        err.achieved = len(chosen)
        err.partial = tuple(chosen)
        raise err
    return ExtremeSet(algorithm="xray", indices=tuple(chosen), requested=r)


def gp_select(sk: SketchResult, r: int) -> ExtremeSet:
    """Scan projection rows, taking each row's argmin and argmax column.

    Duplicates are skipped; if the rows run out before r distinct columns
    are found the shortfall is reported on the result.
    """
    entries = sk.entries if isinstance(sk, SketchResult) else np.asarray(sk)
    _check_rank(r, entries.shape[1])
    chosen: list[int] = []
    seen: set[int] = set()
    for row in entries:
        for j in (int(np.argmin(row)), int(np.argmax(row))):
            if j not in seen:
                seen.add(j)
                chosen.append(j)
                if len(chosen) == r:
                    return ExtremeSet(algorithm="gp", indices=tuple(chosen),
                                      requested=r)
    return ExtremeSet(algorithm="gp", indices=tuple(chosen), requested=r,
                      shortfall=r - len(chosen))
