"""Sequential tests for one-parameter exponential families.

Implements the generalized-likelihood-ratio stopping rule

    tau = inf{ m : max_{l<=m} sup_{|theta-theta0|>=eps}
               sum_{i=l}^m log f_theta(Y_i)/f_theta0(Y_i) > A },

together with the one-sided (anchored at l=1) GLR test, the one-sided SPRT
between two fixed parameters, and threshold selection for a target mean time
to false alarm. The inner supremum over theta is computed in closed form:
the window log-likelihood ratio is concave in theta, so the unrestricted
window MLE is clamped to the admissible regions {theta >= theta0+eps} and
{theta <= theta0-eps} intersected with the parameter domain.

Families are represented in natural form f_theta(y) = exp(theta*T(y) -
b(theta)) h(y). Two instantiations ship: the Gaussian unit-variance mean
family, and the coherence-statistic family in which an observation v in
(0, 1] has sufficient statistic -(C/phi)*T_int(v)^delta and b(J) = -log J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import vmaxfam
from .errors import DomainError, EmptyInput, NoAdmissibleRegion
from .vmaxfam import FamilyParams

_THETA_CAP = 1e300  # stands in for a +infinity MLE (e.g. all-zero W windows)


class ExpFamily:
    """One-parameter exponential family in natural form.

    Subclasses must define ``param_domain`` (an open interval as a (lo, hi)
    pair), ``suff_stat``, ``log_partition`` and ``base_measure_logdensity``;
    ``log_partition_deriv`` and ``mle_from_stats`` have numeric fallbacks
    that subclasses may override with closed forms.
    """

    param_domain: tuple[float, float] = (-math.inf, math.inf)

    def suff_stat(self, y):
        raise NotImplementedError

    def log_partition(self, theta):
        raise NotImplementedError

    def base_measure_logdensity(self, y):
        raise NotImplementedError

    def log_partition_deriv(self, theta: float) -> float:
        """b'(theta), the mean of T(Y) under f_theta. Numeric fallback."""
        h = 1e-6 * max(1.0, abs(theta))
        return (self.log_partition(theta + h) - self.log_partition(theta - h)) / (2 * h)

    def mle_from_stats(self, stat_sums, counts):
        """Solve b'(theta) = stat_sum/count per window. Numeric fallback (1e-10)."""
        sums = np.atleast_1d(np.asarray(stat_sums, dtype=float))
        cnts = np.atleast_1d(np.asarray(counts, dtype=float))
        out = np.empty_like(sums)
        lo, hi = self.param_domain
        anchor = (lo if math.isfinite(lo) else -1.0) / 2.0 \
            + (hi if math.isfinite(hi) else 1.0) / 2.0
        for i, (s, c) in enumerate(zip(sums, cnts)):
            target = s / c
            f = lambda th: self.log_partition_deriv(th) - target
            a = b = anchor
            step = 1.0
            while f(a) > 0:  # b' is increasing; walk a down toward lo
                a = lo + (a - lo) / 8.0 if math.isfinite(lo) else a - step
                step *= 2.0
            step = 1.0
            while f(b) < 0:
                b = hi - (hi - b) / 8.0 if math.isfinite(hi) else b + step
                step *= 2.0
            out[i] = optimize.brentq(f, a, b, xtol=1e-10) if a < b else a
        return out if np.ndim(stat_sums) else float(out[0])

    def log_density(self, y, theta: float):
        return theta * self.suff_stat(y) - self.log_partition(theta) \
            + self.base_measure_logdensity(y)


class GaussianMeanFamily(ExpFamily):
    """N(theta, 1): T(y) = y, b(theta) = theta^2 / 2, Theta = R."""

    param_domain = (-math.inf, math.inf)

    def suff_stat(self, y):
        return np.asarray(y, dtype=float) if np.ndim(y) else float(y)

    def log_partition(self, theta):
        theta = np.asarray(theta, dtype=float) if np.ndim(theta) else theta
        return theta * theta / 2.0

    def base_measure_logdensity(self, y):
        y = np.asarray(y, dtype=float) if np.ndim(y) else y
        return -y * y / 2.0 - 0.5 * math.log(2.0 * math.pi)

    def log_partition_deriv(self, theta: float) -> float:
        return float(theta)

    def mle_from_stats(self, stat_sums, counts):
        return np.asarray(stat_sums, dtype=float) / np.asarray(counts, dtype=float)


@dataclass(frozen=True)
class VStatFamily(ExpFamily):
    """Coherence-statistic family: observation v in (0,1], parameter J > 0.

    T(v) = -(C/phi) T_int(v)^delta = -W(v) and b(J) = -log J, so the window
    MLE is count / sum(W) and the window GLR value reduces to
    count*log(Jc) - (Jc - 1)*sum(W) for the clamped MLE Jc.
    """

    params: FamilyParams

    param_domain = (0.0, math.inf)

    def suff_stat(self, y):
        return -vmaxfam.w_transform(self.params, y)

    def log_partition(self, theta):
        return -np.log(theta) if np.ndim(theta) else -math.log(theta)

    def base_measure_logdensity(self, y):
        fp = self.params
        y_arr = np.asarray(y, dtype=float)
        t = vmaxfam.t_integral(y_arr, fp.n)
        with np.errstate(divide="ignore"):
            t_term = (fp.delta - 1) * np.log(t) if fp.delta > 1 else 0.0
        out = (fp.log_c + math.log(fp.delta) - math.log(fp.phi) + t_term
               + (fp.n - 4) / 2.0 * np.log1p(-y_arr * y_arr))
        return out if np.ndim(y) else float(out)

    def log_partition_deriv(self, theta: float) -> float:
        return -1.0 / theta

    def mle_from_stats(self, stat_sums, counts):
        sums = np.asarray(stat_sums, dtype=float)
        cnts = np.asarray(counts, dtype=float)
        with np.errstate(divide="ignore"):
            jhat = cnts / np.maximum(-sums, 0.0)
        return np.minimum(jhat, _THETA_CAP)


@dataclass(frozen=True)
class GlrConfig:
    """Detector parameters: pre-change theta0, minimum change eps, threshold A."""

    theta0: float
    epsilon: float
    threshold_a: float
    window: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if self.window is not None and self.window < 1:
            raise DomainError(f"window must be a positive integer, got {self.window}")


def admissible_boundaries(fam: ExpFamily, cfg: GlrConfig):
    """(plus, minus) boundary parameters, None for a region that misses Theta.

    Raises NoAdmissibleRegion when both {theta >= theta0+eps} and
    {theta <= theta0-eps} have empty intersection with the domain.
    """
    lo, hi = fam.param_domain
    plus = cfg.theta0 + cfg.epsilon if cfg.theta0 + cfg.epsilon < hi else None
    minus = cfg.theta0 - cfg.epsilon if cfg.theta0 - cfg.epsilon > lo else None
    if plus is None and minus is None:
        raise NoAdmissibleRegion(
            f"neither theta0+eps nor theta0-eps intersects the domain {fam.param_domain}")
    return plus, minus


def _window_values(fam, theta0, b_theta0, boundary, is_plus, sums, counts):
    """Clamped inner-sup values for each window (vectorized over windows)."""
    theta_hat = fam.mle_from_stats(sums, counts)
    clamped = np.maximum(theta_hat, boundary) if is_plus \
        else np.minimum(theta_hat, boundary)
    return (clamped - theta0) * sums - counts * (fam.log_partition(clamped) - b_theta0)


def _scan(fam, cfg, boundaries, prefix, m, lo):
    """GLR statistic over window starts l = lo..m given prefix sums S_0..S_m."""
    sums = prefix[m] - prefix[lo - 1:m]
    counts = np.arange(m - lo + 1, 0, -1, dtype=float)
    b0 = fam.log_partition(cfg.theta0)
    plus, minus = boundaries
    best = -math.inf
    if plus is not None:
        best = float(_window_values(fam, cfg.theta0, b0, plus, True, sums, counts).max())
    if minus is not None:
        best = max(best, float(
            _window_values(fam, cfg.theta0, b0, minus, False, sums, counts).max()))
    return best


def glr_statistic(fam: ExpFamily, cfg: GlrConfig, samples) -> float:
    """GLR statistic after observing ``samples`` (all window starts, or the
    last ``cfg.window`` starts when a window is configured)."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise EmptyInput("glr_statistic needs at least one sample")
    boundaries = admissible_boundaries(fam, cfg)
    prefix = np.concatenate(([0.0], np.cumsum(fam.suff_stat(arr))))
    m = arr.size
    lo = 1 if cfg.window is None else max(1, m - cfg.window + 1)
    return _scan(fam, cfg, boundaries, prefix, m, lo)


@dataclass
class DetectorState:
    """Streaming GLR detector state.

    ``prefix_sums`` holds S_0..S_m with S_i the sum of the first i sufficient
    statistics; ``current_stat`` always equals the from-scratch GLR statistic
    of the observations seen so far; ``stopped_at``, once set, never changes
    and further steps are no-ops.
    """

    m: int = 0
    current_stat: float = -math.inf
    stopped_at: int | None = None
    _buf: np.ndarray = field(default_factory=lambda: np.zeros(128), repr=False)

    @property
    def prefix_sums(self) -> np.ndarray:
        return self._buf[: self.m + 1]

    @property
    def stopped(self) -> bool:
        return self.stopped_at is not None


def detector_step(state: DetectorState, y: float, fam: ExpFamily,
                  cfg: GlrConfig) -> DetectorState:
    """Advance the detector by one observation.

    Appends y, updates prefix sums, recomputes the GLR statistic over the
    allowed window starts and freezes the state at the first time the
    statistic strictly exceeds the threshold. Stepping a stopped detector
    returns it unchanged.
    """
    if state.stopped:
        return state
    if state.m + 1 >= state._buf.size:
        grown = np.zeros(state._buf.size * 2)
        grown[: state._buf.size] = state._buf
        state._buf = grown
    m = state.m + 1
    state._buf[m] = state._buf[m - 1] + float(fam.suff_stat(y))
    state.m = m
    boundaries = admissible_boundaries(fam, cfg)
    lo = 1 if cfg.window is None else max(1, m - cfg.window + 1)
    state.current_stat = _scan(fam, cfg, boundaries, state._buf, m, lo)
    if state.current_stat > cfg.threshold_a:
        state.stopped_at = m
    return state


def run_detector(fam: ExpFamily, cfg: GlrConfig, samples) -> DetectorState:
    """Feed ``samples`` through a fresh detector, stopping early if it fires."""
    state = DetectorState()
    for y in np.asarray(samples, dtype=float):
        detector_step(state, y, fam, cfg)
        if state.stopped:
            break
    return state


def one_sided_glr_n(fam: ExpFamily, cfg: GlrConfig, samples):
    """First m with sup_{|theta-theta0|>=eps} sum_{i=1}^m llr_i > A, else None.

    This is the anchored (l=1) test whose finite-stopping probability under a
    misspecified density controls the false-alarm rate of the full rule.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        return None
    boundaries = admissible_boundaries(fam, cfg)
    sums = np.cumsum(fam.suff_stat(arr))
    counts = np.arange(1, arr.size + 1, dtype=float)
    b0 = fam.log_partition(cfg.theta0)
    plus, minus = boundaries
    stat = np.full(arr.size, -math.inf)
    if plus is not None:
        stat = np.maximum(stat, _window_values(
            fam, cfg.theta0, b0, plus, True, sums, counts))
    if minus is not None:
        stat = np.maximum(stat, _window_values(
            fam, cfg.theta0, b0, minus, False, sums, counts))
    hits = np.flatnonzero(stat > cfg.threshold_a)
    return int(hits[0]) + 1 if hits.size else None


def sprt_nu(fam: ExpFamily, theta: float, theta0: float, threshold_a: float,
            samples):
    """One-sided SPRT of theta vs theta0: first m with the cumulative
    log-likelihood ratio above the threshold, else None."""
    lo, hi = fam.param_domain
    for th in (theta, theta0):
        if not lo < th < hi:
            raise DomainError(f"parameter {th} outside domain {fam.param_domain}")
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        return None
    increments = (theta - theta0) * fam.suff_stat(arr) \
        - (fam.log_partition(theta) - fam.log_partition(theta0))
    walk = np.cumsum(increments)
    hits = np.flatnonzero(walk > threshold_a)
    return int(hits[0]) + 1 if hits.size else None


def threshold_for_mtfa(beta: float, kappa: float | None = None,
                       i_min: float | None = None) -> float:
    """Threshold A for a target mean time to false alarm beta.

    With ``kappa`` absent returns A = log(beta), the well-specified choice.
    With ``kappa`` given (misspecified pre-change density), inverts the
    false-alarm lower bound e^(kappa*A) / (2*(A/i_min + 1)) = beta by
    bracketed root-finding (tolerance 1e-9), which guarantees the bound on
    the mean time to false alarm is at least beta.
    """
    if not beta > 1.0:
        raise DomainError(f"beta must be > 1, got {beta}")
    if kappa is None:
        return math.log(beta)
    if i_min is None or not i_min > 0:
        raise DomainError("i_min must be positive when kappa is given")
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")

    def gap(a):
        return kappa * a - math.log(2.0 * beta) - math.log(a / i_min + 1.0)

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError("threshold search did not bracket a root")
    return float(optimize.brentq(gap, 0.0, hi, xtol=1e-9))
