"""Dispersion-matrix construction and change-point streams of data matrices.

Three dispersion recipes ship: diagonal, block-sparse (one k x k block plus
diagonal), and the row-sparse construction used in the experiments: a
Wishart-style draw whose top-left k x k block is kept, rows k+1 ..
floor((p+k)/2) keep only their diagonal and one anti-diagonal partner entry
(mirrored for symmetry), every other off-diagonal is zeroed, and a scaled
identity is added to restore strict positive definiteness.

Streams deliver one n x p matrix per time index m, drawn with the pre-change
dispersion for m < gamma and the post-change dispersion for m >= gamma.
Per-index RNG substreams make any prefix reproducible independently of
consumption order, and the mean draw uses a substream separate from the data
draw so that the induced coherence statistics are identical across mean
policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .corrstats import DataMatrix
from .errors import DimensionError, DomainError, NotPositiveDefinite
from .seeding import STREAM_DATA, STREAM_MEAN, substream


# --------------------------------------------------------------------------
# covariance specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalCov:
    """Diagonal dispersion; ``variances`` of length p, or None for identity."""

    p: int
    variances: tuple[float, ...] | None = None

    kind = "diagonal"


@dataclass(frozen=True, eq=False)
class BlockSparseCov:
    """Identity with the top-left k x k block replaced by ``block``."""

    p: int
    k: int
    block: np.ndarray = field(repr=False)

    kind = "block_sparse"


@dataclass(frozen=True)
class RowSparseWishartCov:
    """The sparsified-Wishart recipe; at most k nonzeros in any row.

    ``dof`` is the number of Gaussian factor rows in the Wishart draw. A low
    rank is essential: with dof on the order of p the retained off-diagonals
    are O(sqrt(dof)) against O(dof) diagonals, the block correlations shrink
    to ~1/sqrt(dof), and the induced coherence parameter collapses to J ~ 1
    (no detectable change). dof=3 yields block correlations strong enough to
    land J in the single-to-double digits, the regime of the experiments.
    """

    p: int
    k: int
    seed: int
    dof: int = 3

    kind = "row_sparse_wishart"


CovSpec = Union[DiagonalCov, BlockSparseCov, RowSparseWishartCov]


def equicorrelated_block(k: int, rho: float) -> np.ndarray:
    """Convenience k x k block with unit diagonal and constant correlation."""
    if not -1.0 / (k - 1) < rho < 1.0:
        raise DomainError(f"equicorrelation rho={rho} is not positive definite")
    return np.full((k, k), rho) + (1.0 - rho) * np.eye(k)


def make_sigma(spec: CovSpec) -> np.ndarray:
    """Construct the dispersion matrix for ``spec``.

    The result is symmetric positive definite and satisfies the sparsity
    pattern of its kind; validity is cheap to check and callers in tests do.
    """
    if spec.p < 2:
        raise DomainError(f"need p >= 2, got {spec.p}")
    if isinstance(spec, DiagonalCov):
        if spec.variances is None:
            return np.eye(spec.p)
        var = np.asarray(spec.variances, dtype=float)
        if var.shape != (spec.p,):
            raise DomainError("variances must have length p")
        if np.any(var <= 0):
            raise DomainError("variances must be positive")
        return np.diag(var)

    if not 1 <= spec.k <= spec.p:
        raise DomainError(f"k must be in [1, {spec.p}], got {spec.k}")

    if isinstance(spec, BlockSparseCov):
        block = np.asarray(spec.block, dtype=float)
        if block.shape != (spec.k, spec.k):
            raise DomainError("block must be k x k")
        sigma = np.eye(spec.p)
        sigma[: spec.k, : spec.k] = (block + block.T) / 2.0
        _assert_pd(sigma)
        return sigma

    # row-sparse Wishart recipe
    p, k = spec.p, spec.k
    if spec.dof < 1:
        raise DomainError(f"dof must be >= 1, got {spec.dof}")
    rng = substream(spec.seed)
    gauss = rng.standard_normal((spec.dof, p))
    wishart = gauss.T @ gauss
    sigma = np.zeros((p, p))
    sigma[:k, :k] = wishart[:k, :k]
    np.fill_diagonal(sigma, np.diag(wishart))
    if k >= 2:
        # rows k+1 .. floor((p+k)/2), 1-based: keep the (p+k+1-i)-th entry,
        # mirrored to keep symmetry. k=1 admits no off-diagonal partner at
        # all: degree-1 row sparsity forces a diagonal matrix.
        for i in range(k + 1, (p + k) // 2 + 1):
            j = p + k + 1 - i
            sigma[i - 1, j - 1] = wishart[i - 1, j - 1]
            sigma[j - 1, i - 1] = wishart[i - 1, j - 1]
    min_eig = float(np.linalg.eigvalsh(sigma).min())
    load = max(0.0, -min_eig) + 0.05 * float(np.trace(sigma)) / p
    sigma += load * np.eye(p)
    return sigma


def _assert_pd(sigma: np.ndarray) -> None:
    min_eig = float(np.linalg.eigvalsh(sigma).min())
    if min_eig <= 0:
        raise NotPositiveDefinite(f"minimum eigenvalue {min_eig} <= 0")


# --------------------------------------------------------------------------
# mean policies and row shapes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroMean:
    kind = "zero"


@dataclass(frozen=True, eq=False)
class FixedMean:
    mu: np.ndarray

    kind = "fixed"


@dataclass(frozen=True)
class RandomPerMatrixMean:
    scale: float

    kind = "random_per_matrix"


MeanPolicy = Union[ZeroMean, FixedMean, RandomPerMatrixMean]


@dataclass(frozen=True)
class GaussianShape:
    kind = "gaussian"


@dataclass(frozen=True)
class StudentTShape:
    """Student-t elliptical rows with ``dof`` degrees of freedom.

    One chi-square mixer is drawn per matrix and shared by its rows, so each
    row is marginally multivariate-t with the requested dispersion while the
    matrix-wide scale cancels in the column normalization of the coherence
    statistic. An independent mixer per row would leave every row i.i.d.
    multivariate-t but measurably distorts the coherence law even as p grows
    (the columns' unit-sphere scores pile up near the heavy rows), so the
    shared-mixer form is the one under which the statistic is exactly
    shape-free for diagonal dispersion.
    """

    dof: float

    kind = "student_t"

    def __post_init__(self):
        if not self.dof > 2:
            raise DomainError(f"student_t dof must be > 2, got {self.dof}")


Shape = Union[GaussianShape, StudentTShape]


def _draw_rows(chol: np.ndarray, n: int, mean: np.ndarray, shape: Shape,
               rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, chol.shape[0]))
    rows = z @ chol.T
    if isinstance(shape, StudentTShape):
        mixer = rng.chisquare(shape.dof)
        rows *= math.sqrt(shape.dof / mixer)
    return rows + mean


def sample_matrix(sigma: np.ndarray, n: int, mean, shape: Shape,
                  rng: np.random.Generator) -> DataMatrix:
    """Draw one n x p block with i.i.d. rows of dispersion ``sigma``.

    Rows are generated through the Cholesky factor of sigma; deterministic
    given the generator state.
    """
    if n < 3:
        raise DimensionError(f"need n >= 3, got {n}")
    try:
        chol = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    mean_vec = np.zeros(sigma.shape[0]) if mean is None \
        else np.asarray(mean, dtype=float)
    return DataMatrix(_draw_rows(chol, n, mean_vec, shape, rng))


# --------------------------------------------------------------------------
# change-point streams
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    """Description of a change-point stream of n x p data matrices."""

    n: int
    p: int
    gamma: float  # positive integer change point, or math.inf for "never"
    sigma0: CovSpec
    sigma1: CovSpec
    mean_policy: MeanPolicy = ZeroMean()
    shape: Shape = GaussianShape()
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma >= 1):
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")
        if self.sigma0.p != self.p or self.sigma1.p != self.p:
            raise DomainError("sigma0.p and sigma1.p must equal p")


def _mean_for_index(spec: StreamSpec, m: int) -> np.ndarray:
    policy = spec.mean_policy
    if isinstance(policy, ZeroMean):
        return np.zeros(spec.p)
    if isinstance(policy, FixedMean):
        mu = np.asarray(policy.mu, dtype=float)
        if mu.shape != (spec.p,):
            raise DomainError("fixed mean must have length p")
        return mu
    rng = substream(spec.seed, STREAM_MEAN, m)
    return policy.scale * rng.standard_normal(spec.p)


class _StreamSampler:
    """Caches the two Cholesky factors for repeated per-index draws."""

    def __init__(self, spec: StreamSpec):
        self.spec = spec
        self._chol = {}
        for tag, cov in (("pre", spec.sigma0), ("post", spec.sigma1)):
            sigma = make_sigma(cov)
            try:
                self._chol[tag] = np.linalg.cholesky(sigma)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"{tag}-change sigma: {exc}") from None

    def matrix_at(self, m: int) -> DataMatrix:
        if m < 1:
            raise DomainError(f"stream indices start at 1, got {m}")
        spec = self.spec
        chol = self._chol["pre"] if m < spec.gamma else self._chol["post"]
        rng = substream(spec.seed, STREAM_DATA, m)
        mean = _mean_for_index(spec, m)
        return DataMatrix(_draw_rows(chol, spec.n, mean, spec.shape, rng))


def matrix_at(spec: StreamSpec, m: int) -> DataMatrix:
    """The m-th matrix of the stream (1-based), independent of any other index."""
    return _StreamSampler(spec).matrix_at(m)


def stream(spec: StreamSpec, count: int | None = None) -> Iterator[DataMatrix]:
    """Yield matrices m = 1, 2, ... (``count`` of them, or unbounded)."""
    sampler = _StreamSampler(spec)
    m = 0
    while count is None or m < count:
        m += 1
        yield sampler.matrix_at(m)
