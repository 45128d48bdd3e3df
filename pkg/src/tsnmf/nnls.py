"""Nonnegative least squares in the reduced space.

An active-set solver (Lawson-Hanson) handles the small per-column problems;
with the data reduced to n-by-n, the full coefficient matrix, the relative
residual, and whole separation-rank sweeps all run without touching the
original matrix. Reduced-space values equal their full-space counterparts
because the implicit orthogonal factor preserves 2-norms.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import matio
from .errors import DataError, NumericalError, UsageError

_SNAP = 1e-12


class NnlsIterationError(NumericalError):
    """Major-iteration cap exceeded; carries the best iterate found."""

    def __init__(self, message: str, best_y: np.ndarray, kkt_violation: float):
        super().__init__(message)
        self.best_y = best_y
        self.kkt_violation = kkt_violation


def kkt_terms(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(Most negative gradient entry, complementarity |y.g|) at y.

    A solution passes the certificate at tolerance tau when y >= 0, the
    first term is >= -tau, and the second is <= tau * ||b||^2.
    """
    g = a.T @ (a @ y - b)
    return float(g.min()), float(abs(y @ g))


def nnls_solve(a, b, *, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Minimize ||a @ y - b||_2 subject to y >= 0 (active-set method).

    Terminates when no inactive coordinate has gradient below -tol; for
    rank-deficient ``a`` any KKT point is accepted. Raises
    NnlsIterationError after ``max_iter`` passive-set changes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.ndim != 2 or a.shape[0] != b.shape[0]:
        raise UsageError(f"incompatible shapes {a.shape} and {b.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise UsageError("design matrix must be at least 1x1")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("non-finite entries in nnls input")

    q = a.shape[1]
    y = np.zeros(q)
    passive = np.zeros(q, dtype=bool)

    for _ in range(max_iter):
        w = a.T @ (b - a @ y)
        w_inactive = np.where(passive, -np.inf, w)
        j = int(np.argmax(w_inactive))
        if not np.isfinite(w_inactive[j]) or w_inactive[j] <= tol:
            return y
        passive[j] = True

        for _ in range(3 * q + 10):
            z = np.zeros(q)
            z[passive] = np.linalg.lstsq(a[:, passive], b, rcond=None)[0]
            if z[passive].min() > 0.0:
                y = z
                break
            blocking = passive & (z <= 0.0)
            yb, zb = y[blocking], z[blocking]
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(yb - zb > 0.0, yb / (yb - zb), 0.0)
            kmin = int(np.argmin(steps))
            y = y + steps[kmin] * (z - y)
            drop = passive & (y <= 0.0)
            # The blocking coordinate that defined the step lands on zero up
            # to round-off; force it out to guarantee inner-loop progress.
            drop[np.nonzero(blocking)[0][kmin]] = True
            y[drop] = 0.0
            passive[drop] = False
        else:
            raise NumericalError("nnls inner loop failed to make progress")

    w = a.T @ (b - a @ y)
    violation = float(np.where(passive, -np.inf, w).max())
    raise NnlsIterationError(
        f"nnls did not converge within {max_iter} iterations "
        f"(stationarity violation {violation:.3e})",
        best_y=y,
        kkt_violation=violation,
    )


def solve_columns(design: np.ndarray, targets: np.ndarray, *,
                  tol: float = 1e-8, threads: int = 1) -> np.ndarray:
    """Solve one NNLS problem per column of ``targets`` against ``design``."""
    design = np.asarray(design, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    q, n = design.shape[1], targets.shape[1]
    out = np.empty((q, n))

    def solve_one(i: int):
        try:
            out[:, i] = nnls_solve(design, targets[:, i], tol=tol)
        except NumericalError as exc:
            raise NumericalError(f"column {i}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(solve_one, range(n)))
    else:
        for i in range(n):
            solve_one(i)
    return out


@dataclass(frozen=True)
class CoefficientMatrix:
    """Nonnegative coefficients H; row t corresponds to extreme_indices[t]."""

    entries: np.ndarray = field(repr=False)
    extreme_indices: tuple[int, ...]

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64, copy=True)
        if e.min() < -_SNAP:
            raise NumericalError(
                f"coefficient matrix has entry {e.min():.3e} below -{_SNAP}"
            )
        e[e < 0.0] = 0.0
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def rank(self) -> int:
        return len(self.extreme_indices)

    def save(self, path):
        matio.write_matrix(path, self.entries)
        sidecar = {"kind": "coefficients",
                   "extreme_indices": list(self.extreme_indices)}
        Path(f"{path}.json").write_text(json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CoefficientMatrix":
        meta = json.loads(Path(f"{path}.json").read_text())
        if meta.get("kind") != "coefficients":
            raise DataError(f"{path} is not a saved coefficient matrix")
        return cls(entries=matio.read_matrix(path),
                   extreme_indices=tuple(meta["extreme_indices"]))


def _indices_of(k_set) -> list[int]:
    indices = list(getattr(k_set, "indices", k_set))
    if not indices:
        raise UsageError("empty extreme set")
    return indices


def compute_h(reduced, k_set, *, tol: float = 1e-8,
              threads: int = 1) -> CoefficientMatrix:
    """Coefficients of every column over the selected extreme columns.

    Column i of the result solves min_{y>=0} ||M(:,K) y - M(:,i)||_2 on the
    reduced matrix M, which equals the full-space solution.
    """
    from .select import as_matrix

    m = as_matrix(reduced)
    indices = _indices_of(k_set)
    if max(indices) >= m.shape[1] or min(indices) < 0:
        raise UsageError("extreme indices out of range for reduced matrix")
    h = solve_columns(m[:, indices], m, tol=tol, threads=threads)
    return CoefficientMatrix(entries=h, extreme_indices=tuple(indices))


def relative_residual(reduced, k_set, h: CoefficientMatrix) -> float:
    """Squared relative misfit ||M - M(:,K) H||_F^2 / ||M||_F^2.

    Computed on the reduced matrix; equal to the same ratio on the original
    data up to round-off.
    """
    from .select import as_matrix

    m = as_matrix(reduced)
    indices = _indices_of(k_set)
    if h.entries.shape != (len(indices), m.shape[1]):
        raise UsageError("coefficient matrix shape does not match extreme set")
    denom = float(np.einsum("ij,ij->", m, m))
    if denom == 0.0:
        raise DataError("zero-norm reduced matrix")
    resid = m - m[:, indices] @ h.entries
    return float(np.einsum("ij,ij->", resid, resid)) / denom


# ---------------------------------------------------------------------------
# Separation-rank sweep


@dataclass(frozen=True)
class SweepCell:
    algorithm: str
    r: int
    residual: float | None
    indices: tuple[int, ...]
    shortfall: int
    seconds: float
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    cells: list[SweepCell]

    def to_json_dict(self) -> dict:
        return {
            "cells": [
                {
                    "algorithm": c.algorithm,
                    "r": c.r,
                    "residual": c.residual,
                    "indices": list(c.indices),
                    "shortfall": c.shortfall,
                    "seconds": c.seconds,
                    "error": c.error,
                }
                for c in self.cells
            ]
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["r", "algorithm", "residual", "seconds"])
            for c in self.cells:
                writer.writerow([c.r, c.algorithm,
                                 "" if c.residual is None else repr(c.residual),
                                 f"{c.seconds:.6f}"])

    def residuals(self, algorithm: str) -> dict[int, float]:
        return {c.r: c.residual for c in self.cells
                if c.algorithm == algorithm and c.residual is not None}


def sweep(reduced, stats, algorithms: Iterable[str], r_values: Sequence[int], *,
          sketch=None, normalization: str = "l1", tol: float = 1e-8,
          threads: int = 1) -> SweepReport:
    """Selection + coefficients + residual for every (algorithm, rank) pair.

    Runs entirely on reduced data. Selections are nested in r for a fixed
    algorithm (each selector is run once at max(r_values) and prefixes are
    reused), which makes the residual nonincreasing in r. Per-cell failures
    are recorded in the report rather than raised.
    """
    from . import select as select_mod
    from .sketch import scale_columns

    m = select_mod.as_matrix(reduced)
    n = m.shape[1]
    r_values = list(r_values)
    if not r_values or min(r_values) < 1 or max(r_values) > n:
        raise UsageError(f"rank values must lie in [1, {n}]")
    algorithms = list(algorithms)
    unknown = set(algorithms) - {"spa", "xray", "gp"}
    if unknown:
        raise UsageError(f"unknown algorithms: {sorted(unknown)}")
    r_max = max(r_values)

    sequences: dict[str, list[int]] = {}
    if "spa" in algorithms:
        m_sel = m
        if normalization == "l1":
            m_sel = m / np.asarray(stats.l1, dtype=np.float64)
        sequences["spa"] = select_mod._spa_sequence(m_sel, r_max)
    if "xray" in algorithms:
        sequences["xray"] = select_mod._xray_sequence(m, r_max, tol=tol)
    if "gp" in algorithms:
        if sketch is None:
            raise UsageError("gp sweep requires a sketch")
        scaled = scale_columns(sketch, stats) if normalization == "l1" else sketch
        sequences["gp"] = list(
            select_mod.gp_select(scaled, r_max).indices
        )

    cells: list[SweepCell] = []
    for alg in algorithms:
        seq = sequences[alg]
        for r in r_values:
            start = time.perf_counter()
            prefix = seq[:r]
            shortfall = r - len(prefix)
            if not prefix:
                cells.append(SweepCell(alg, r, None, (), r, 0.0,
                                       error="no selectable columns"))
                continue
            try:
                h = compute_h(m, prefix, tol=tol, threads=threads)
                residual = relative_residual(m, prefix, h)
                err = None
            except (NumericalError, DataError) as exc:
                h, residual, err = None, None, str(exc)
            cells.append(SweepCell(alg, r, residual, tuple(prefix), shortfall,
                                   time.perf_counter() - start, error=err))
    return SweepReport(cells=cells)
