import numpy as np
import pytest

from mixcontrast.data import (
    ExpressionMatrix,
    build_design_matrices,
    column_standardize,
    load_expression_matrix,
    write_expression_matrix,
)
from mixcontrast.errors import DataError


def _write(tmp_path, matrix_lines, label_lines):
    mpath = tmp_path / "matrix.tsv"
    lpath = tmp_path / "labels.tsv"
    mpath.write_text("\n".join(matrix_lines) + "\n")
    lpath.write_text("\n".join(label_lines) + "\n")
    return mpath, lpath


def test_load_rejects_singleton_class(tmp_path):
    m, l = _write(
        tmp_path,
        ["id\ts1\ts2\ts3", "g1\t1\t2\t3", "g2\t4\t5\t6"],
        ["s1\t1", "s2\t1", "s3\t2"],
    )
    with pytest.raises(DataError, match="class 2 has fewer than 2 samples"):
        load_expression_matrix(m, l)


def test_load_parses_small_matrix(tmp_path):
    m, l = _write(
        tmp_path,
        ["id\ts1\ts2\ts3\ts4", "g1\t1\t2\t3\t4", "g2\t0.5\t1e-3\t-2\t7", "g3\t0\t0\t0\t1"],
        ["s1\t1", "s2\t2", "s3\t1", "s4\t2"],
    )
    data = load_expression_matrix(m, l)
    assert (data.n, data.p, data.m) == (3, 4, 2)
    assert data.class_sizes.tolist() == [2, 2]
    assert data.class_of_sample.tolist() == [1, 2, 1, 2]
    assert not data.standardized
    assert data.values[1, 1] == 1e-3


def test_load_header_without_corner_cell(tmp_path):
    m, l = _write(tmp_path, ["s1\ts2\ts3\ts4", "g1\t1\t2\t3\t4"], ["s1\t1", "s2\t1", "s3\t2", "s4\t2"])
    assert load_expression_matrix(m, l).sample_ids == ("s1", "s2", "s3", "s4")


def test_load_reports_non_numeric_cell(tmp_path):
    m, l = _write(
        tmp_path,
        ["id\ts1\ts2\ts3\ts4", "g1\t1\tNA\t3\t4"],
        ["s1\t1", "s2\t1", "s3\t2", "s4\t2"],
    )
    with pytest.raises(DataError, match="non-numeric value at row 2, column 3"):
        load_expression_matrix(m, l)


def test_load_rejects_missing_label_and_duplicates(tmp_path):
    m, l = _write(tmp_path, ["id\ts1\ts2\ts3\ts4", "g1\t1\t2\t3\t4"], ["s1\t1", "s2\t1", "s3\t2"])
    with pytest.raises(DataError, match="missing from labels"):
        load_expression_matrix(m, l)
    m, l = _write(
        tmp_path,
        ["id\ts1\ts2\ts3\ts4", "g1\t1\t2\t3\t4", "g1\t1\t2\t3\t4"],
        ["s1\t1", "s2\t1", "s3\t2", "s4\t2"],
    )
    with pytest.raises(DataError, match="duplicate feature id"):
        load_expression_matrix(m, l)


def test_load_rejects_gapped_classes(tmp_path):
    m, l = _write(tmp_path, ["id\ts1\ts2\ts3\ts4", "g1\t1\t2\t3\t4"], ["s1\t1", "s2\t1", "s3\t3", "s4\t3"])
    with pytest.raises(DataError, match="1..m"):
        load_expression_matrix(m, l)


def test_round_trip_is_bit_exact(tmp_path, rng):
    data = ExpressionMatrix.from_array(rng.normal(size=(7, 5)) * 1e3, [1, 1, 2, 2, 2])
    write_expression_matrix(data, tmp_path / "m.tsv", tmp_path / "l.tsv")
    back = load_expression_matrix(tmp_path / "m.tsv", tmp_path / "l.tsv")
    assert np.array_equal(back.values, data.values)
    assert back.feature_ids == data.feature_ids
    assert np.array_equal(back.class_of_sample, data.class_of_sample)


def test_standardize_simple_column():
    data = ExpressionMatrix.from_array(np.array([[1.0, 4.0], [2.0, 0.0], [3.0, 2.0]]).repeat(2, axis=1), [1, 1, 2, 2])
    out = column_standardize(data)
    assert np.allclose(out.values[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)
    assert out.standardized


def test_standardize_constant_column():
    values = np.array([[5.0, 1.0, 1.0, 2.0], [5.0, 2.0, 3.0, 1.0], [5.0, 3.0, 2.0, 0.0]])
    with pytest.raises(DataError, match="constant column 1"):
        column_standardize(ExpressionMatrix.from_array(values, [1, 1, 2, 2]))


def test_standardize_postconditions_and_idempotence(rng):
    data = ExpressionMatrix.from_array(rng.normal(3.0, 2.0, size=(50, 6)), [1, 1, 1, 2, 2, 2])
    out = column_standardize(data)
    assert np.all(np.abs(out.values.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.values.std(axis=0, ddof=1) - 1) < 1e-10)
    again = column_standardize(out)
    assert np.max(np.abs(again.values - out.values)) < 1e-10


def test_design_matrices():
    d = build_design_matrices([1, 1, 2])
    assert d.X.tolist() == [[1, 0], [1, 0], [0, 1]]
    assert np.array_equal(d.V, np.eye(3))
    assert np.array_equal(d.U, d.X)
    single = build_design_matrices([1, 1])
    assert single.X.tolist() == [[1], [1]]


def test_design_gram_is_diagonal_class_sizes():
    labels = [2, 1, 2, 3, 1, 3, 3]
    X = build_design_matrices(labels).X
    assert np.array_equal(X.T @ X, np.diag([2, 2, 3]))
    assert np.all(X.sum(axis=1) == 1)


def test_matrix_is_read_only(rng):
    data = ExpressionMatrix.from_array(rng.normal(size=(3, 4)), [1, 1, 2, 2])
    with pytest.raises(ValueError):
        data.values[0, 0] = 1.0


def test_rejects_non_finite():
    with pytest.raises(DataError, match="non-finite"):
        ExpressionMatrix.from_array([[1.0, np.nan, 1.0, 2.0]], [1, 1, 2, 2])
