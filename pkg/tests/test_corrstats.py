"""Tests for sample correlation, Z-scores, coherence profiles and hub counts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxcoh.corrstats import (CorrelationMatrix, DataMatrix, hub_count,
                              knn_coherence, max_knn_coherence,
                              sample_correlation, zscores)
from maxcoh.errors import ConstantColumn, DimensionError


def _random_matrix(rng, n=10, p=100):
    return DataMatrix(rng.standard_normal((n, p)))


# --------------------------------------------------------------------------
# sample_correlation
# --------------------------------------------------------------------------

def test_identical_columns_give_exact_one():
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = rng.standard_normal((8, 5))
        x[:, 2] = x[:, 0]
        r = sample_correlation(DataMatrix(x)).entries
        assert r[0, 2] == 1.0


def test_orthogonal_centered_columns_uncorrelated():
    # columns already centered and mutually orthogonal
    x = np.array([[1.0, 1.0, 0.0],
                  [-1.0, 1.0, 0.0],
                  [1.0, -1.0, 1.0],
                  [-1.0, -1.0, -1.0]])
    assert np.allclose(x.sum(axis=0), 0)
    assert abs(x[:, 0] @ x[:, 1]) < 1e-15
    r = sample_correlation(DataMatrix(x)).entries
    assert abs(r[0, 1]) < 1e-12


def test_correlation_equals_zscore_gram():
    rng = np.random.default_rng(11)
    x = _random_matrix(rng)
    r = sample_correlation(x).entries
    z = zscores(x).vectors
    assert np.abs(r - z.T @ z).max() < 1e-10


def test_correlation_matches_numpy_oracle():
    rng = np.random.default_rng(12)
    x = _random_matrix(rng, n=9, p=20)
    r = sample_correlation(x).entries
    oracle = np.corrcoef(x.values, rowvar=False)
    assert np.abs(r - oracle).max() < 1e-12


def test_constant_column_rejected():
    x = np.ones((5, 3))
    x[:, 0] = [1, 2, 3, 4, 5]
    x[:, 2] = [2, 1, 0, 1, 2]
    with pytest.raises(ConstantColumn) as err:
        sample_correlation(DataMatrix(x))
    assert err.value.column == 1


def test_small_n_rejected():
    with pytest.raises(DimensionError):
        DataMatrix(np.zeros((2, 4)))


# --------------------------------------------------------------------------
# zscores
# --------------------------------------------------------------------------

def test_zscores_hand_example():
    x = DataMatrix(np.array([[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]]))
    z = zscores(x).vectors[:, 0]
    expected = np.array([-1.0, 0.0, 1.0]) / math.sqrt(2.0)
    assert np.abs(z - expected).max() < 1e-12


def test_zscores_invariants():
    rng = np.random.default_rng(3)
    z = zscores(_random_matrix(rng)).vectors
    assert np.abs(z.sum(axis=0)).max() < 1e-10
    assert np.abs(np.linalg.norm(z, axis=0) - 1.0).max() < 1e-10


def test_zscore_distance_identity():
    # ||Z_i - Z_j|| = sqrt(2 (1 - R_ij))
    rng = np.random.default_rng(4)
    x = _random_matrix(rng, n=8, p=12)
    z = zscores(x).vectors
    r = sample_correlation(x).entries
    for i in range(4):
        for j in range(i + 1, 6):
            dist = np.linalg.norm(z[:, i] - z[:, j])
            assert abs(dist - math.sqrt(2.0 * (1.0 - r[i, j]))) < 1e-10


# --------------------------------------------------------------------------
# knn coherence and hubs
# --------------------------------------------------------------------------

def _corr_p3(r12, r13, r23):
    m = np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])
    return CorrelationMatrix(m)


def test_knn_profile_p3_example():
    r = _corr_p3(0.8, 0.1, 0.1)
    prof = knn_coherence(r, 2).values
    assert np.allclose(prof[:, 0], [0.8, 0.8, 0.1])
    assert np.allclose(prof[:, 1], [0.1, 0.1, 0.1])


def test_knn_profile_identity_zero():
    r = CorrelationMatrix(np.eye(6))
    assert knn_coherence(r, 5).values.max() == 0.0


def test_knn_first_column_is_row_max():
    rng = np.random.default_rng(5)
    r = sample_correlation(_random_matrix(rng, n=10, p=15))
    prof = knn_coherence(r, 1).values[:, 0]
    a = np.abs(r.entries)
    for i in range(r.p):
        expected = max(a[i, j] for j in range(r.p) if j != i)
        assert prof[i] == expected


def test_knn_rows_nonincreasing():
    rng = np.random.default_rng(6)
    prof = knn_coherence(sample_correlation(_random_matrix(rng)), 20).values
    assert np.all(np.diff(prof, axis=1) <= 0)


def test_knn_kmax_out_of_range():
    r = CorrelationMatrix(np.eye(4))
    with pytest.raises(DimensionError):
        knn_coherence(r, 4)


def test_max_knn_examples():
    assert max_knn_coherence(CorrelationMatrix(np.eye(5)), 1) == 0.0
    r = _corr_p3(0.8, 0.1, 0.1)
    assert max_knn_coherence(r, 1) == pytest.approx(0.8)
    assert max_knn_coherence(r, 2) == pytest.approx(0.1)


def test_max_knn_delta1_brute_force_exact():
    rng = np.random.default_rng(8)
    r = sample_correlation(_random_matrix(rng))
    brute = max(abs(r.entries[i, j])
                for i in range(r.p) for j in range(r.p) if i != j)
    assert max_knn_coherence(r, 1) == brute


def test_hub_count_examples():
    ones = CorrelationMatrix(np.ones((3, 3)))
    assert hub_count(ones, 2, 0.9) == 3
    assert hub_count(CorrelationMatrix(np.eye(4)), 1, 0.5) == 0


def test_hub_count_event_duality():
    # hub_count > 0  <=>  max_knn_coherence >= rho, exactly
    rng = np.random.default_rng(9)
    for _ in range(5):
        r = sample_correlation(_random_matrix(rng, n=6, p=12))
        for delta in (1, 2, 3):
            v = max_knn_coherence(r, delta)
            for rho in np.arange(0.0, 1.0001, 0.05):
                assert (hub_count(r, delta, rho) > 0) == (v >= rho)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000),
       shift=st.floats(-50, 50, allow_nan=False),
       scale=st.floats(0.01, 100, allow_nan=False))
def test_affine_invariance(seed, shift, scale):
    # per-column positive scaling and per-row constant shifts leave R alone
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 8))
    scales = scale * (1.0 + rng.random(8))
    mu = shift * rng.standard_normal(8)
    r0 = sample_correlation(DataMatrix(x)).entries
    r1 = sample_correlation(DataMatrix(x * scales + mu)).entries
    assert np.abs(r0 - r1).max() < 1e-10
    assert abs(max_knn_coherence(CorrelationMatrix(r0), 1)
               - max_knn_coherence(CorrelationMatrix(r1), 1)) < 1e-10
