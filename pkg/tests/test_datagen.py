"""Tests for dispersion construction and change-point streams."""

import math

import numpy as np
import pytest

from maxcoh.corrstats import max_knn_coherence, sample_correlation
from maxcoh.datagen import (BlockSparseCov, DiagonalCov, FixedMean,
                            GaussianShape, RandomPerMatrixMean,
                            RowSparseWishartCov, StreamSpec, StudentTShape,
                            ZeroMean, equicorrelated_block, make_sigma,
                            matrix_at, sample_matrix, stream)
from maxcoh.errors import DomainError, NotPositiveDefinite
from maxcoh.seeding import substream


def _row_nnz(sigma):
    return int((np.abs(sigma) > 0).sum(axis=1).max())


# --------------------------------------------------------------------------
# make_sigma
# --------------------------------------------------------------------------

def test_diagonal_identity():
    assert np.array_equal(make_sigma(DiagonalCov(p=5)), np.eye(5))
    sigma = make_sigma(DiagonalCov(p=3, variances=(1.0, 2.0, 0.5)))
    assert np.array_equal(sigma, np.diag([1.0, 2.0, 0.5]))
    with pytest.raises(DomainError):
        make_sigma(DiagonalCov(p=3, variances=(1.0, -1.0, 0.5)))


def test_block_sparse_pattern():
    block = equicorrelated_block(4, 0.6)
    sigma = make_sigma(BlockSparseCov(p=10, k=4, block=block))
    assert np.allclose(sigma[:4, :4], block)
    off = sigma.copy()
    off[:4, :4] = 0.0
    np.fill_diagonal(off, 0.0)
    assert np.all(off == 0.0)  # one k x k block plus diagonal
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_block_sparse_rejects_indefinite_block():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues -1, 3
    with pytest.raises(NotPositiveDefinite):
        make_sigma(BlockSparseCov(p=6, k=2, block=bad))


def test_row_sparse_wishart_degree_one_is_diagonal():
    sigma = make_sigma(RowSparseWishartCov(p=10, k=1, seed=3))
    assert np.array_equal(sigma, np.diag(np.diag(sigma)))


def test_row_sparse_wishart_properties():
    sigma = make_sigma(RowSparseWishartCov(p=100, k=5, seed=7))
    assert np.array_equal(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma).min() > 0
    assert _row_nnz(sigma) <= 5


def test_row_sparse_pairing_pattern():
    p, k = 20, 3
    sigma = make_sigma(RowSparseWishartCov(p=p, k=k, seed=1))
    # rows k+1 .. floor((p+k)/2) (1-based) carry the anti-diagonal partner
    for i in range(k + 1, (p + k) // 2 + 1):
        j = p + k + 1 - i
        row = sigma[i - 1].copy()
        row[i - 1] = 0.0
        row[j - 1] = 0.0
        assert np.all(row == 0.0)


def test_row_sparse_wishart_deterministic():
    a = make_sigma(RowSparseWishartCov(p=30, k=4, seed=11))
    b = make_sigma(RowSparseWishartCov(p=30, k=4, seed=11))
    assert np.array_equal(a, b)


def test_make_sigma_invalid_k():
    with pytest.raises(DomainError):
        make_sigma(RowSparseWishartCov(p=10, k=11, seed=0))


# --------------------------------------------------------------------------
# sample_matrix
# --------------------------------------------------------------------------

def test_sample_matrix_identity_covariance_uncorrelated():
    rng = substream(101)
    x = sample_matrix(np.eye(10), 5000, None, GaussianShape(), rng)
    r = sample_correlation(x).entries
    off = np.abs(r - np.eye(10)).max()
    assert off < 0.05


def test_sample_matrix_not_positive_definite():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        sample_matrix(bad, 5, None, GaussianShape(), substream(0))


def test_mean_shift_leaves_statistic_alone():
    # shared generator state: the data draw is identical, the mean cancels
    sigma = np.eye(20)
    x0 = sample_matrix(sigma, 8, None, GaussianShape(), substream(5))
    x1 = sample_matrix(sigma, 8, np.full(20, 3.7), GaussianShape(),
                       substream(5))
    v0 = max_knn_coherence(sample_correlation(x0), 1)
    v1 = max_knn_coherence(sample_correlation(x1), 1)
    assert v0 == pytest.approx(v1, abs=1e-12)


def test_student_t_shape_validation():
    with pytest.raises(DomainError):
        StudentTShape(dof=2.0)


# --------------------------------------------------------------------------
# streams
# --------------------------------------------------------------------------

def _spec(gamma, seed=4, mean_policy=ZeroMean(), shape=GaussianShape()):
    return StreamSpec(n=6, p=12, gamma=gamma,
                      sigma0=DiagonalCov(p=12),
                      sigma1=BlockSparseCov(p=12, k=3,
                                            block=equicorrelated_block(3, 0.8)),
                      mean_policy=mean_policy, shape=shape, seed=seed)


def test_stream_gamma_infinite_all_pre_change():
    spec_inf = _spec(math.inf)
    spec_late = _spec(10 ** 9)
    a = [x.values for x in stream(spec_inf, count=5)]
    b = [x.values for x in stream(spec_late, count=5)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_stream_gamma_one_all_post_change():
    spec1 = _spec(1)
    # with gamma=1 the pre-change dispersion never appears: swapping sigma0
    # for anything else changes nothing
    other = StreamSpec(n=6, p=12, gamma=1,
                       sigma0=DiagonalCov(p=12, variances=tuple([9.0] * 12)),
                       sigma1=spec1.sigma1, seed=4)
    for x, y in zip(stream(spec1, count=5), stream(other, count=5)):
        assert np.array_equal(x.values, y.values)


def test_stream_deterministic_across_consumers():
    spec = _spec(3)
    a = [x.values for x in stream(spec, count=6)]
    b = [x.values for x in stream(spec, count=6)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_stream_prefix_independent_of_consumption():
    spec = _spec(4)
    eager = [x.values for x in stream(spec, count=7)]
    assert np.array_equal(matrix_at(spec, 5).values, eager[4])
    assert np.array_equal(matrix_at(spec, 1).values, eager[0])


def test_translation_invariance_across_mean_policies():
    base = _spec(2, mean_policy=ZeroMean())
    fixed = _spec(2, mean_policy=FixedMean(mu=np.full(12, -2.5)))
    random = _spec(2, mean_policy=RandomPerMatrixMean(scale=4.0))
    vs = []
    for spec in (base, fixed, random):
        vs.append([max_knn_coherence(sample_correlation(x), 1)
                   for x in stream(spec, count=6)])
    assert np.allclose(vs[0], vs[1], atol=1e-12)
    assert np.allclose(vs[0], vs[2], atol=1e-12)


def test_pooled_covariance_converges():
    sigma = make_sigma(RowSparseWishartCov(p=8, k=3, seed=2))
    errors = []
    for count in (200, 2000):
        rng = substream(55)
        x = sample_matrix(sigma, count, None, GaussianShape(), rng)
        centered = x.values - x.values.mean(axis=0)
        sample_cov = centered.T @ centered / (count - 1)
        errors.append(np.linalg.norm(sample_cov - sigma))
    assert errors[1] < errors[0]


def test_stream_spec_validation():
    with pytest.raises(DomainError):
        _spec(0)
    with pytest.raises(DomainError):
        StreamSpec(n=6, p=10, gamma=1, sigma0=DiagonalCov(p=12),
                   sigma1=DiagonalCov(p=10))
