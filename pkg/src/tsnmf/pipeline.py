"""Run orchestration: streaming, artifact caching, and result files.

A factorize run makes exactly one pass over the input, fusing the
triangular factor, the column norms, and any Gaussian projection. The
reduced artifacts are cached in the output directory keyed by a content
hash computed during that same pass, so sweeps and re-selections never
re-read the data. All result files are deterministic for a fixed seed and
flag set; timings live in a separate file.
"""

from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio, nnls, select, sketch as sketch_mod, tsqr
from .errors import DataError, TsnmfError, UsageError
from .kernels import get_backend

ALGORITHMS = ("spa", "xray", "gp")


@contextmanager
def _stage(name: str):
    try:
        yield
    except TsnmfError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


@dataclass
class RunConfig:
    """Flags of a factorize or sweep invocation."""

    input: Path
    outdir: Path
    algorithms: tuple[str, ...] = ("spa",)
    r_values: tuple[int, ...] = (1,)
    reduction: str = "svd"
    normalization: str | None = None  # resolved by validate()
    sketch_k: int | None = None
    seed: int = 0
    threads: int = 1
    chunk_rows: int = matio.DEFAULT_CHUNK_ROWS
    combine_order: str = "tree"
    use_cache: bool = True
    verbose: bool = False

    def validate(self) -> "RunConfig":
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise UsageError(f"unknown algorithms: {sorted(unknown)}")
        if not self.algorithms:
            raise UsageError("at least one algorithm is required")
        if not self.r_values or min(self.r_values) < 1:
            raise UsageError("separation ranks must be >= 1")
        if self.reduction not in ("qr", "svd"):
            raise UsageError(f"reduction must be qr or svd, got {self.reduction!r}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.sketch_k is not None and self.sketch_k < 1:
            raise UsageError("sketch rows must be >= 1")
        needs_scaling = {"spa", "gp"} & set(self.algorithms)
        if self.normalization is None:
            self.normalization = "l1" if needs_scaling else "none"
        if self.normalization not in ("l1", "none"):
            raise UsageError(f"normalization must be l1 or none, got {self.normalization!r}")
        if self.normalization == "l1" and set(self.algorithms) == {"xray"}:
            raise UsageError("xray forbids normalization; use --normalization none")
        if "gp" in self.algorithms and self.normalization != "l1":
            raise UsageError("gp requires l1 normalization")
        return self

    @property
    def r_max(self) -> int:
        return max(self.r_values)

    def resolve_sketch_k(self) -> int | None:
        if "gp" not in self.algorithms:
            return self.sketch_k
        if self.sketch_k is not None:
            return self.sketch_k
        return sketch_mod.default_sketch_rows(self.r_max)


@dataclass
class Artifacts:
    """Reduced data for one input file, plus pass accounting."""

    factor: tsqr.TriangularFactor
    stats: tsqr.ColumnStats
    sketch: sketch_mod.SketchResult | None
    content_hash: str
    rows: int
    cols: int
    rows_read: int
    bytes_read: int
    file_bytes: int
    cache_hit: bool
    chunks: int = 0
    tree_depth: int = 0


def _index_key(path: Path) -> str:
    try:
        st = path.stat()
    except OSError as exc:
        raise DataError(f"cannot read input: {exc}", stage="read") from exc
    return f"{path.resolve()}|{st.st_size}|{st.st_mtime_ns}"


def _sketch_name(seed: int, k: int) -> str:
    return f"sketch_s{seed}_k{k}.tsm"


def ensure_artifacts(cfg: RunConfig, *, need_sketch: bool) -> Artifacts:
    """Load cached reduced artifacts for the input, or stream one pass.

    The cache key is the content hash computed while streaming; an index
    keyed by (path, size, mtime) locates it without re-reading the file.
    """
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    art_root = cfg.outdir / "artifacts"
    art_root.mkdir(exist_ok=True)
    index_path = art_root / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    key = _index_key(cfg.input)
    file_bytes = cfg.input.stat().st_size
    k = cfg.resolve_sketch_k() if need_sketch else None

    entry = index.get(key) if cfg.use_cache else None
    if entry is not None:
        adir = art_root / entry["hash"]
        sketch_file = adir / _sketch_name(cfg.seed, k) if k is not None else None
        have_all = (adir / "R.tsm").exists() and (adir / "stats.tsm").exists() and (
            sketch_file is None or sketch_file.exists()
        )
        if have_all:
            with _stage("artifact-load"):
                factor = tsqr.TriangularFactor.load(adir / "R.tsm")
                stats = tsqr.ColumnStats.load(adir / "stats.tsm")
                sk = sketch_mod.SketchResult.load(sketch_file) if sketch_file else None
            return Artifacts(
                factor=factor, stats=stats, sketch=sk,
                content_hash=entry["hash"], rows=entry["rows"], cols=entry["cols"],
                rows_read=0, bytes_read=0, file_bytes=file_bytes, cache_hit=True,
            )

    hasher = hashlib.sha256()
    with _stage("read"):
        reader = matio.open_chunk_reader(cfg.input, cfg.chunk_rows, hasher=hasher)
    with _stage("stream"):
        result = tsqr.stream_pass(
            reader, sketch_rows=k, seed=cfg.seed,
            combine_order=cfg.combine_order, threads=cfg.threads,
        )
    content_hash = hasher.hexdigest()[:16]

    adir = art_root / content_hash
    adir.mkdir(exist_ok=True)
    with _stage("artifact-save"):
        result.factor.save(adir / "R.tsm")
        result.stats.save(adir / "stats.tsm")
        if result.sketch is not None:
            result.sketch.save(adir / _sketch_name(cfg.seed, k))
        manifest = {
            "input": str(cfg.input.resolve()),
            "content_hash": content_hash,
            "rows": result.rows,
            "cols": result.factor.n,
            "chunk_rows": cfg.chunk_rows,
        }
        (adir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
        index[key] = {"hash": content_hash, "rows": result.rows, "cols": result.factor.n}
        index_path.write_text(json.dumps(index, sort_keys=True, indent=1))

    return Artifacts(
        factor=result.factor, stats=result.stats, sketch=result.sketch,
        content_hash=content_hash, rows=result.rows, cols=result.factor.n,
        rows_read=reader.rows_read, bytes_read=reader.bytes_read,
        file_bytes=file_bytes, cache_hit=False,
        chunks=result.chunks, tree_depth=result.tree_depth,
    )


def _reduced_matrix(cfg: RunConfig, art: Artifacts):
    if cfg.reduction == "qr":
        return art.factor
    with _stage("rsvd"):
        return tsqr.rsvd(art.factor)


def _select_one(cfg: RunConfig, alg: str, reduced, art: Artifacts,
                r: int) -> select.ExtremeSet:
    if alg == "spa":
        return select.spa(reduced, r, normalize=cfg.normalization == "l1",
                          stats=art.stats)
    if alg == "xray":
        return select.xray_greedy(reduced, r)
    scaled = sketch_mod.scale_columns(art.sketch, art.stats)
    return select.gp_select(scaled, r)


def _summary_base(cfg: RunConfig, art: Artifacts) -> dict:
    return {
        "input": str(cfg.input),
        "m": art.rows,
        "n": art.cols,
        "content_hash": art.content_hash,
        "algorithms": list(cfg.algorithms),
        "reduction": cfg.reduction,
        "normalization": cfg.normalization,
        "sketch_k": cfg.resolve_sketch_k(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "chunk_rows": cfg.chunk_rows,
        "combine_order": cfg.combine_order,
        "backend": get_backend(),
        "cache_hit": art.cache_hit,
        "reader": {
            "rows_read": art.rows_read,
            "bytes_read": art.bytes_read,
            "file_bytes": art.file_bytes,
        },
    }


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=1))


def _communication_ledger(cfg: RunConfig, art: Artifacts) -> dict:
    n = art.cols
    reduced = n * n * 8
    k = cfg.resolve_sketch_k() if "gp" in cfg.algorithms else None
    return {
        "chunks_processed": art.chunks,
        "combine_tree_depth": art.tree_depth,
        "reduced_bytes": reduced + 2 * n * 8 + (k * n * 8 if k else 0),
        "input_bytes_read": art.bytes_read,
    }


def run_factorize(cfg: RunConfig) -> dict:
    """One-pass factorization: selection, coefficients, residual per algorithm.

    Writes per-algorithm extreme sets, coefficient matrices, and residuals
    into the output directory, plus a deterministic run summary and a
    separate timing file. Returns the summary dict.
    """
    cfg.validate()
    if len(cfg.r_values) != 1:
        raise UsageError("factorize takes a single separation rank; use sweep for ranges")
    r = cfg.r_values[0]
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    art = ensure_artifacts(cfg, need_sketch="gp" in cfg.algorithms)
    timings["pass_seconds"] = time.perf_counter() - t0
    if r > art.cols:
        raise UsageError(f"rank {r} exceeds column count {art.cols}")

    reduced = _reduced_matrix(cfg, art)
    summary = _summary_base(cfg, art)
    summary["r"] = r
    results = {}
    for alg in cfg.algorithms:
        t0 = time.perf_counter()
        with _stage(f"select-{alg}"):
            k_set = _select_one(cfg, alg, reduced, art, r)
        with _stage(f"nnls-{alg}"):
            h = nnls.compute_h(reduced, k_set, threads=cfg.threads)
            residual = nnls.relative_residual(reduced, k_set, h)
        timings[f"{alg}_seconds"] = time.perf_counter() - t0
        with _stage("write"):
            _write_json(cfg.outdir / f"{alg}.extremes.json", k_set.to_json_dict())
            h.save(cfg.outdir / f"{alg}.H.tsm")
            _write_json(cfg.outdir / f"{alg}.residual.json", {
                "algorithm": alg, "r": r,
                "relative_residual": residual,
            })
        results[alg] = {
            "indices": list(k_set.indices),
            "shortfall": k_set.shortfall,
            "relative_residual": residual,
        }
    summary["results"] = results
    _write_json(cfg.outdir / "run_summary.json", summary)
    _write_json(cfg.outdir / "timings.json", {"timings": timings})
    if cfg.verbose:
        summary["communication"] = _communication_ledger(cfg, art)
    return summary


def run_sweep(cfg: RunConfig) -> dict:
    """Residual-vs-rank curves on reduced data; never re-reads the input
    when factorize artifacts are cached."""
    cfg.validate()
    art = ensure_artifacts(cfg, need_sketch="gp" in cfg.algorithms)
    if cfg.r_max > art.cols:
        raise UsageError(f"rank {cfg.r_max} exceeds column count {art.cols}")
    reduced = _reduced_matrix(cfg, art)

    t0 = time.perf_counter()
    with _stage("sweep"):
        report = nnls.sweep(
            reduced, art.stats, cfg.algorithms, cfg.r_values,
            sketch=art.sketch, normalization=cfg.normalization,
            threads=cfg.threads,
        )
    seconds = time.perf_counter() - t0

    with _stage("write"):
        report.write_csv(cfg.outdir / "sweep.csv")
        report.write_json(cfg.outdir / "sweep.json")
    summary = _summary_base(cfg, art)
    summary["r_values"] = list(cfg.r_values)
    summary["cells"] = len(report.cells)
    _write_json(cfg.outdir / "run_summary.json", summary)
    _write_json(cfg.outdir / "timings.json", {"timings": {"sweep_seconds": seconds}})
    if cfg.verbose:
        summary["communication"] = _communication_ledger(cfg, art)
    return summary


def run_generate(*, m: int, n: int, r: int, noise: float, seed: int,
                 permutation: str, out: Path,
                 chunk_rows: int = matio.DEFAULT_CHUNK_ROWS) -> dict:
    """Generate a planted separable matrix plus ground-truth files."""
    spec = matio.SyntheticSpec(m=m, n=n, r=r, noise=noise, seed=seed,
                               permutation=permutation)
    with _stage("generate"):
        truth = matio.generate_separable(spec, out, chunk_rows)
        h_path = Path(f"{out}.h_true.tsm")
        matio.write_matrix(h_path, truth.h_true)
        payload = {
            "m": m, "n": n, "r": r, "noise": noise, "seed": seed,
            "permutation": permutation,
            "extreme_positions": truth.extreme_positions,
            "extreme_set": sorted(truth.extreme_set),
            "h_true": h_path.name,
        }
        _write_json(Path(f"{out}.truth.json"), payload)
    return payload


def run_kron(a_path: Path, out: Path,
             chunk_rows: int = matio.DEFAULT_CHUNK_ROWS) -> dict:
    with _stage("kron"):
        header = matio.expand_kronecker(a_path, out, chunk_rows)
    return {"rows": header.rows, "cols": header.cols, "output": str(out)}


def run_inspect(path: Path, *, validate: bool = False,
                chunk_rows: int = matio.DEFAULT_CHUNK_ROWS) -> dict:
    """Report the header and (optionally) fully validate the payload."""
    with _stage("inspect"):
        reader = matio.open_chunk_reader(path, chunk_rows)
        info: dict = {"path": str(path), "format": "binary"}
        if isinstance(reader, matio.ChunkReader):
            info.update(rows=reader.rows, cols=reader.cols,
                        payload_bytes=reader.header.payload_bytes)
        else:
            info["format"] = "text"
            validate = True  # text shape is only known after a full scan
        if validate:
            rows = 0
            for chunk in reader:
                rows += chunk.rows
            info.update(rows=rows, cols=reader.cols, validated=True)
        else:
            info["validated"] = False
    return info
