import numpy as np
import pytest
from scipy import stats

from mixcontrast.data import ExpressionMatrix
from mixcontrast.errors import DataError
from mixcontrast.simulate import SimConfig, generate_dataset
from mixcontrast.ttest import pooled_t


def test_hand_computed_t():
    res = pooled_t(ExpressionMatrix.from_array([[1.0, 2.0, 3.0, 4.0]], [1, 1, 2, 2]))
    assert res.t[0] == pytest.approx(-2.8284, abs=1e-4)
    assert res.df == 2
    assert res.P[0] == pytest.approx(stats.ttest_ind([1, 2], [3, 4]).pvalue, rel=1e-12)


def test_matches_scipy(rng):
    Y = rng.normal(size=(50, 9))
    res = pooled_t(ExpressionMatrix.from_array(Y, [1, 2, 1, 2, 1, 2, 1, 1, 2]))
    ref = stats.ttest_ind(Y[:, [0, 2, 4, 6, 7]], Y[:, [1, 3, 5, 8]], axis=1)
    assert np.allclose(res.t, ref.statistic, rtol=1e-12)
    assert np.allclose(res.P, ref.pvalue, rtol=1e-10)


def test_identical_classes():
    res = pooled_t(ExpressionMatrix.from_array([[1.0, 3.0, 1.0, 3.0]], [1, 1, 2, 2]))
    assert res.t[0] == 0.0 and res.P[0] == 1.0


def test_scale_invariance_and_antisymmetry(rng):
    Y = rng.normal(size=(20, 6))
    a = pooled_t(ExpressionMatrix.from_array(Y, [1, 1, 1, 2, 2, 2]))
    b = pooled_t(ExpressionMatrix.from_array(2 * Y, [1, 1, 1, 2, 2, 2]))
    c = pooled_t(ExpressionMatrix.from_array(Y, [2, 2, 2, 1, 1, 1]))
    assert np.allclose(a.t, b.t, rtol=1e-12)
    assert np.allclose(a.t, -c.t, rtol=1e-12)


def test_zero_variance_sentinel():
    Y = np.array([[1.0, 1.0, 2.0, 2.0], [0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 5.0, 9.0]])
    res = pooled_t(ExpressionMatrix.from_array(Y, [1, 1, 2, 2]))
    assert res.t[0] == -np.inf and res.P[0] == 0.0
    assert res.t[1] == 0.0 and res.P[1] == 1.0
    assert res.zero_variance.tolist() == [True, True, False]
    key = res.ranking_key()
    assert key[0] > key[2] and np.isfinite(key).all()


def test_requires_two_classes(rng):
    with pytest.raises(DataError):
        pooled_t(ExpressionMatrix.from_array(rng.normal(size=(3, 6)), [1, 1, 2, 2, 3, 3]))


def test_null_p_values_uniform():
    data, _ = generate_dataset(SimConfig(delta=0.0), seed=8)
    res = pooled_t(data)
    assert stats.kstest(res.P, "uniform").statistic < 0.05
