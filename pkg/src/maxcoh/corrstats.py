"""Sample correlation, Z-scores, kNN coherence profiles, and hub counts.

All statistics here are functions of one data block: an n x p matrix whose
rows are independent samples of a p-variate vector. The headline quantity is
the maximal kNN coherence, the largest over columns of the delta-th largest
absolute correlation with the other columns. For delta=1 it is simply the
largest absolute off-diagonal sample correlation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantColumn, DimensionError

_SYM_TOL = 1e-12
_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class DataMatrix:
    """One n x p observation block; rows are i.i.d. p-variate samples."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise DimensionError(f"expected a 2-d array, got ndim={vals.ndim}")
        n, p = vals.shape
        if n < 3:
            raise DimensionError(f"need at least 3 rows, got n={n}")
        if p < 2:
            raise DimensionError(f"need at least 2 columns, got p={p}")
        if not np.all(np.isfinite(vals)):
            raise DimensionError("data matrix contains non-finite entries")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CorrelationMatrix:
    """A p x p sample correlation matrix (symmetric, unit diagonal)."""

    entries: np.ndarray

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=float)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1]:
            raise DimensionError("correlation matrix must be square")
        if np.abs(ent - ent.T).max() > _SYM_TOL:
            raise DimensionError("correlation matrix is not symmetric")
        if np.abs(np.diag(ent) - 1.0).max() > _RANGE_TOL:
            raise DimensionError("correlation matrix diagonal is not 1")
        if np.abs(ent).max() > 1.0 + _RANGE_TOL:
            raise DimensionError("correlation entries outside [-1, 1]")
        object.__setattr__(self, "entries", ent)

    @property
    def p(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ZScores:
    """Centered unit-norm column representations; Z^T Z is the correlation matrix."""

    vectors: np.ndarray  # shape (n, p); column i is Z_i

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def p(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class KnnProfile:
    """values[i, k-1] is the k-th largest of {|R_ij| : j != i}; rows nonincreasing."""

    values: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def k_max(self) -> int:
        return self.values.shape[1]


def _centered_columns(x: DataMatrix) -> np.ndarray:
    """Column-centered data; raises ConstantColumn on any zero-variance column."""
    centered = x.values - x.values.mean(axis=0)
    sq = np.einsum("ij,ij->j", centered, centered)
    bad = np.flatnonzero(sq <= 0.0)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    return centered


def zscores(x: DataMatrix) -> ZScores:
    """Z-score representation: Z_i = (X_i - mean) / (sd * sqrt(n-1)).

    Each Z_i sums to zero and has unit Euclidean norm, and Z_i . Z_j equals
    the sample correlation between columns i and j.
    """
    centered = _centered_columns(x)
    norms = np.linalg.norm(centered, axis=0)  # = sd * sqrt(n-1)
    return ZScores(centered / norms)


def sample_correlation(x: DataMatrix) -> CorrelationMatrix:
    """Sample correlation matrix of the columns of ``x``.

    Computed as the 1/(n-1) sample covariance normalized by its diagonal,
    which is algebraically Z^T Z for the Z-scores of ``x``. Normalizing by
    sqrt(S_ii * S_jj) (rather than by precomputed column norms) keeps
    R_ij = 1 exact for bitwise-identical columns.
    """
    centered = _centered_columns(x)
    s = centered.T @ centered / (x.n - 1)
    r = s / np.sqrt(np.outer(np.diag(s), np.diag(s)))
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)
    np.clip(r, -1.0, 1.0, out=r)
    return CorrelationMatrix(r)


def knn_coherence(r: CorrelationMatrix, k_max: int) -> KnnProfile:
    """Per-column profile of the k largest absolute correlations, k = 1..k_max.

    Ties are kept by value: duplicated magnitudes simply repeat in the
    profile. Requires 1 <= k_max <= p-1.
    """
    p = r.p
    if not 1 <= k_max <= p - 1:
        raise DimensionError(f"k_max must be in [1, {p - 1}], got {k_max}")
    a = np.abs(r.entries).copy()
    np.fill_diagonal(a, -1.0)  # sink the diagonal below any |R_ij|
    ordered = np.sort(a, axis=1)[:, ::-1]
    return KnnProfile(ordered[:, :k_max].copy())


def max_knn_coherence(r: CorrelationMatrix, delta: int) -> float:
    """Maximal kNN coherence: max over columns of the delta-th largest |R_ij|.

    For delta=1 this is the maximal absolute off-diagonal correlation.
    """
    profile = knn_coherence(r, delta)
    return float(profile.values[:, delta - 1].max())


def hub_count(r: CorrelationMatrix, delta: int, rho: float) -> int:
    """Number of vertices of degree >= delta in the rho-thresholded correlation graph.

    Vertices are columns; an edge joins i and j iff |R_ij| >= rho (i != j).
    """
    p = r.p
    if not 1 <= delta <= p - 1:
        raise DimensionError(f"delta must be in [1, {p - 1}], got {delta}")
    if not 0.0 <= rho <= 1.0:
        raise DimensionError(f"rho must be in [0, 1], got {rho}")
    a = np.abs(r.entries) >= rho
    np.fill_diagonal(a, False)
    degrees = a.sum(axis=1)
    return int(np.count_nonzero(degrees >= delta))
