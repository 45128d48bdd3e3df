"""Storage formats, chunked readers, synthetic generation, Kronecker."""

import numpy as np
import pytest
import scipy.optimize
from hypothesis import HealthCheck, given, settings, strategies as st
from numpy.testing import assert_allclose

import tsnmf
from tsnmf import matio
from tsnmf.errors import DataError, UsageError


def test_chunk_partition_10x3_target_4(tmp_matrix):
    path = tmp_matrix(np.arange(30.0).reshape(10, 3))
    chunks = list(tsnmf.ChunkReader(path, 4))
    assert [(c.row_offset, c.rows) for c in chunks] == [(0, 4), (4, 4), (8, 2)]


def test_single_chunk_when_target_exceeds_rows(tmp_matrix):
    path = tmp_matrix(np.ones((5, 2)))
    chunks = list(tsnmf.ChunkReader(path, 100))
    assert [(c.row_offset, c.rows) for c in chunks] == [(0, 5)]


def test_payload_shorter_than_declared(tmp_path):
    path = tmp_path / "short.tsm"
    header = matio.MatrixHeader(rows=6, cols=2)
    path.write_bytes(header.pack() + np.arange(10.0).tobytes())
    with pytest.raises(DataError, match="payload shorter than declared"):
        tsnmf.ChunkReader(path)


def test_payload_longer_than_declared(tmp_path):
    path = tmp_path / "long.tsm"
    header = matio.MatrixHeader(rows=2, cols=2)
    path.write_bytes(header.pack() + np.arange(10.0).tobytes())
    with pytest.raises(DataError, match="payload longer than declared"):
        tsnmf.ChunkReader(path)


def test_bad_magic_is_malformed_header(tmp_path):
    path = tmp_path / "bad.tsm"
    path.write_bytes(b"XX" + b"\x00" * 30)
    with pytest.raises(DataError, match="malformed header"):
        tsnmf.ChunkReader(path)


def test_nonfinite_entry_reports_row_and_column(tmp_matrix):
    bad = np.ones((7, 3))
    bad[5, 1] = np.nan
    path = tmp_matrix(bad)
    with pytest.raises(DataError, match="row 5, column 1"):
        list(tsnmf.ChunkReader(path, 2))


def test_reader_counts_rows_and_bytes(tmp_matrix):
    x = np.random.default_rng(0).random((11, 4))
    path = tmp_matrix(x)
    reader = tsnmf.ChunkReader(path, 3)
    list(reader)
    assert reader.rows_read == 11
    assert reader.bytes_read == path.stat().st_size


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    rows=st.integers(1, 40),
    cols=st.integers(1, 7),
    chunk=st.integers(1, 50),
    seed=st.integers(0, 2**32 - 1),
)
def test_roundtrip_bit_exact_any_chunk_size(tmp_path, rows, cols, chunk, seed):
    x = np.random.default_rng(seed).normal(size=(rows, cols))
    path = tmp_path / f"rt_{rows}_{cols}_{chunk}_{seed}.tsm"
    tsnmf.write_matrix(path, x)
    back = np.vstack([c.data for c in tsnmf.ChunkReader(path, chunk)])
    assert np.array_equal(back, x)


def test_streamed_write_matches_dense_write(tmp_path):
    x = np.random.default_rng(3).random((20, 5))
    with matio.MatrixWriter(tmp_path / "a.tsm", 20, 5) as w:
        w.append(x[:7])
        w.append(x[7:])
    tsnmf.write_matrix(tmp_path / "b.tsm", x)
    assert (tmp_path / "a.tsm").read_bytes() == (tmp_path / "b.tsm").read_bytes()


def test_writer_rejects_row_overflow_and_short_close(tmp_path):
    w = matio.MatrixWriter(tmp_path / "w.tsm", 3, 2)
    w.append(np.ones((2, 2)))
    with pytest.raises(UsageError):
        w.append(np.ones((2, 2)))
    with pytest.raises(DataError):
        w.close()


def test_text_roundtrip_and_sniffing(tmp_path):
    x = np.random.default_rng(1).normal(size=(9, 3))
    path = tmp_path / "m.txt"
    tsnmf.write_text_matrix(path, x)
    reader = tsnmf.open_chunk_reader(path, 4)
    assert isinstance(reader, tsnmf.TextChunkReader)
    back = np.vstack([c.data for c in reader])
    assert np.array_equal(back, x)  # repr round-trips doubles exactly
    assert reader.rows_read == 9
    assert reader.bytes_read == path.stat().st_size


def test_text_rejects_ragged_rows(tmp_path):
    path = tmp_path / "ragged.txt"
    path.write_text("1 2 3\n4 5\n")
    with pytest.raises(DataError, match="inconsistent column count"):
        list(tsnmf.TextChunkReader(path))


# ---------------------------------------------------------------------------
# Synthetic generation


def test_paper_permutation_truth_r20_n200(tmp_path):
    spec = tsnmf.SyntheticSpec(m=250, n=200, r=20, seed=1)
    truth = tsnmf.generate_separable(spec, tmp_path / "x.tsm")
    # Image of {0..19} under the simultaneous swaps (i, 10i), i = 2..19.
    expected = sorted({0, 1} | {10 * i for i in range(2, 20)})
    assert sorted(truth.extreme_set) == expected
    assert len(truth.extreme_positions) == 20
    # Planted extreme t sits at its recorded position with coefficient e_t.
    for t, pos in enumerate(truth.extreme_positions):
        assert_allclose(truth.h_true[:, pos], np.eye(20)[:, t])


def test_identity_permutation_full_rank_gives_identity_h(tmp_path):
    spec = tsnmf.SyntheticSpec(m=50, n=6, r=6, seed=2, permutation="identity")
    truth = tsnmf.generate_separable(spec, tmp_path / "x.tsm")
    assert truth.extreme_positions == list(range(6))
    assert np.array_equal(truth.h_true, np.eye(6))


def test_generation_chunk_size_invariance_bitwise(tmp_path):
    spec = tsnmf.SyntheticSpec(m=137, n=11, r=4, noise=1e-3, seed=9)
    tsnmf.generate_separable(spec, tmp_path / "a.tsm", chunk_rows=7)
    tsnmf.generate_separable(spec, tmp_path / "b.tsm", chunk_rows=64)
    assert (tmp_path / "a.tsm").read_bytes() == (tmp_path / "b.tsm").read_bytes()


def test_generator_rejects_bad_specs(tmp_path):
    with pytest.raises(UsageError):
        tsnmf.generate_separable(
            tsnmf.SyntheticSpec(m=10, n=5, r=6), tmp_path / "x.tsm"
        )
    with pytest.raises(UsageError):
        tsnmf.generate_separable(
            tsnmf.SyntheticSpec(m=10, n=5, r=2, noise=-1.0), tmp_path / "x.tsm"
        )


def test_noiseless_instance_has_zero_nnls_residual(tmp_path):
    # Oracle: dense NNLS (scipy) of every column against the planted extremes.
    spec = tsnmf.SyntheticSpec(m=1000, n=10, r=3, noise=0.0, seed=7)
    truth = tsnmf.generate_separable(spec, tmp_path / "x.tsm")
    x = tsnmf.read_matrix(tmp_path / "x.tsm")
    design = x[:, sorted(truth.extreme_set)]
    total = 0.0
    for i in range(x.shape[1]):
        _, rnorm = scipy.optimize.nnls(design, x[:, i])
        total += rnorm**2
    assert np.sqrt(total) <= 1e-10 * np.linalg.norm(x)


def test_noise_magnitude_bounds_deviation(tmp_path):
    spec0 = tsnmf.SyntheticSpec(m=64, n=8, r=3, noise=0.0, seed=5)
    spec1 = tsnmf.SyntheticSpec(m=64, n=8, r=3, noise=1e-3, seed=5)
    tsnmf.generate_separable(spec0, tmp_path / "a.tsm")
    tsnmf.generate_separable(spec1, tmp_path / "b.tsm")
    a = tsnmf.read_matrix(tmp_path / "a.tsm")
    b = tsnmf.read_matrix(tmp_path / "b.tsm")
    d = b - a
    assert d.min() >= 0.0
    assert d.max() < 1e-3


# ---------------------------------------------------------------------------
# Kronecker expansion


def test_kron_single_row(tmp_path):
    tsnmf.write_matrix(tmp_path / "a.tsm", np.array([[1.0, 2.0]]))
    tsnmf.expand_kronecker(tmp_path / "a.tsm", tmp_path / "x.tsm")
    x = tsnmf.read_matrix(tmp_path / "x.tsm")
    assert np.array_equal(x, np.array([[1.0, 2.0, 2.0, 4.0]]))


def test_kron_identity_2x2(tmp_path):
    tsnmf.write_matrix(tmp_path / "a.tsm", np.eye(2))
    tsnmf.expand_kronecker(tmp_path / "a.tsm", tmp_path / "x.tsm")
    x = tsnmf.read_matrix(tmp_path / "x.tsm")
    assert np.array_equal(x, np.eye(4))


@pytest.mark.parametrize("m_a,n_a,chunk", [(3, 2, 2), (7, 4, 3), (20, 5, 8192)])
def test_kron_matches_dense_oracle(tmp_path, m_a, n_a, chunk):
    a = np.random.default_rng(m_a * 100 + n_a).random((m_a, n_a))
    tsnmf.write_matrix(tmp_path / "a.tsm", a)
    header = tsnmf.expand_kronecker(tmp_path / "a.tsm", tmp_path / "x.tsm", chunk)
    x = tsnmf.read_matrix(tmp_path / "x.tsm")
    assert (header.rows, header.cols) == (m_a * m_a, n_a * n_a)
    assert np.array_equal(x, np.kron(a, a))


def test_kron_paper_shape_scaled_down(tmp_path):
    a = np.random.default_rng(0).random((200, 5))
    tsnmf.write_matrix(tmp_path / "a.tsm", a)
    header = tsnmf.expand_kronecker(tmp_path / "a.tsm", tmp_path / "x.tsm")
    assert (header.rows, header.cols) == (40_000, 25)
