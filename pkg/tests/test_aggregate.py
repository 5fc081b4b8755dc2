import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penet.aggregate import (GlobalPool, global_feature, mean_pool,
                             min_max_normalize, sum_pool)
from penet.errors import EmptyCloudError

from oracles import numeric_grad


def test_sum_pool_columnwise():
    np.testing.assert_array_equal(
        sum_pool(np.array([[1.0, 2.0], [3.0, 4.0]])), [4.0, 6.0])


def test_single_point_is_a_cloud():
    row = np.array([[0.5, -1.0, 2.0]])
    np.testing.assert_array_equal(sum_pool(row), row[0])
    np.testing.assert_array_equal(mean_pool(row), row[0])


def test_sum_pool_additivity_over_union():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 16))
    b = rng.normal(size=(5, 16))
    lhs = sum_pool(np.concatenate([a, b]))
    rhs = sum_pool(a) + sum_pool(b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_empty_cloud_rejected():
    for fn in (sum_pool, mean_pool, global_feature):
        with pytest.raises(EmptyCloudError):
            fn(np.zeros((0, 4)))


def test_mean_pool_examples():
    np.testing.assert_array_equal(
        mean_pool(np.array([[1.0, 2.0], [3.0, 4.0]])), [2.0, 3.0])
    rows = np.tile([1.5, -2.0, 0.25], (6, 1))
    np.testing.assert_allclose(mean_pool(rows), rows[0], atol=1e-7)


def test_mean_is_sum_over_n():
    rng = np.random.default_rng(1)
    e = rng.normal(size=(9, 8))
    np.testing.assert_allclose(mean_pool(e), sum_pool(e) / 9, atol=1e-7)


def test_min_max_normalize_examples():
    np.testing.assert_allclose(
        min_max_normalize(np.array([2.0, 4.0, 6.0])), [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(
        min_max_normalize(np.array([5.0, 5.0, 5.0])), [0.0, 0.0, 0.0])


@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.floats(min_value=0.1, max_value=100.0),
       st.floats(min_value=-50.0, max_value=50.0))
@settings(max_examples=30, deadline=None)
def test_min_max_normalize_affine_invariant(seed, c, d):
    v = np.random.default_rng(seed).normal(size=12)
    np.testing.assert_allclose(min_max_normalize(c * v + d),
                               min_max_normalize(v), atol=1e-6)


def test_global_feature_examples():
    gf = global_feature(np.array([[0.0, 1.0]]))
    np.testing.assert_array_equal(gf.values, [0.0, 1.0])
    assert gf.source_count == 1


def test_global_feature_duplication_invariant():
    rng = np.random.default_rng(2)
    e = rng.normal(size=(5, 10))
    doubled = np.concatenate([e, e])
    np.testing.assert_allclose(global_feature(doubled).values,
                               global_feature(e).values, atol=1e-6)


def test_sum_and_mean_reconcile_after_normalization():
    rng = np.random.default_rng(3)
    e = rng.normal(size=(11, 20))
    np.testing.assert_allclose(min_max_normalize(mean_pool(e)),
                               min_max_normalize(sum_pool(e)), atol=1e-6)


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_global_feature_permutation_invariant_canonical(seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(8, 6))
    perm = rng.permutation(8)
    a = global_feature(e, canonical=True).values
    b = global_feature(e[perm], canonical=True).values
    np.testing.assert_array_equal(a, b)  # bit-exact in canonical order


def test_global_feature_range():
    rng = np.random.default_rng(4)
    gf = global_feature(rng.normal(size=(30, 50)))
    assert gf.values.min() == 0.0
    assert gf.values.max() == 1.0
    assert ((gf.values >= 0) & (gf.values <= 1)).all()


def test_global_pool_forward_matches_functional():
    rng = np.random.default_rng(5)
    e = rng.normal(size=(3, 7, 9))
    pool = GlobalPool()
    out = pool.forward(e)
    for i in range(3):
        np.testing.assert_allclose(out[i], global_feature(e[i]).values,
                                   atol=1e-12)


def test_global_pool_degenerate_rows_are_zero():
    pool = GlobalPool()
    e = np.ones((2, 4, 5))
    out = pool.forward(e)
    assert not out.any()
    assert not pool.backward(np.ones((2, 5))).any()


def test_global_pool_backward_matches_fd():
    rng = np.random.default_rng(6)
    e = rng.normal(size=(2, 4, 6))
    w = rng.normal(size=6)
    pool = GlobalPool()

    def loss_fn():
        return float(pool.forward(e) @ w @ np.ones(2))

    loss_fn()
    ana = pool.backward(np.tile(w, (2, 1)))
    fd = numeric_grad(loss_fn, e)
    np.testing.assert_allclose(ana, fd, rtol=1e-6, atol=1e-8)
