"""Monte Carlo estimation of detection delay and mean time to false alarm.

Two simulation modes:

* ``statistic_level`` draws the coherence statistic directly from its
  density family (cheap; used for false-alarm targets in the thousands);
* ``matrix_level`` generates full n x p matrices from a stream spec and maps
  each to its coherence statistic (end to end, expensive).

Trials are indexed and own RNG substreams derived from (seed, role, trial),
so results are identical whether trials run serially or in a process pool,
and every threshold in a sweep is evaluated on the same sample paths (which
also makes delay and false-alarm estimates exactly monotone in the
threshold). Each trial computes the detector-statistic trajectory once and
reads off the stopping time of every threshold from it.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import misspec, vmaxfam
from .corrstats import DataMatrix, max_knn_coherence, sample_correlation
from .datagen import StreamSpec, _StreamSampler
from .errors import ConfigError
from .glr import GlrConfig, VStatFamily, _scan, admissible_boundaries
from .seeding import STREAM_CALIBRATION, STREAM_EDD, STREAM_MTFA, substream
from .vmaxfam import FamilyParams

_STAT_BLOCK = 128   # statistic-level draws per RNG request
_MATRIX_BLOCK = 8   # matrix-level draws per request (stops are short)
_MAX_HORIZON = 10 ** 6
_CALIBRATION_POOL = 1000


@dataclass(frozen=True)
class RunConfig:
    """One Monte Carlo experiment.

    ``statistic_level`` mode requires (j_pre, j_post); ``matrix_level`` mode
    requires ``stream`` with the same (n, p) as ``family``. ``max_steps``
    of None means the per-threshold default 50 * exp(A), capped at 1e6.
    """

    mode: str
    family: FamilyParams
    glr: GlrConfig
    stream: StreamSpec | None = None
    j_pre: float | None = None
    j_post: float | None = None
    trials_edd: int = 500
    trials_mtfa: int = 1500
    max_steps: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("statistic_level", "matrix_level"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.trials_edd < 1 or self.trials_mtfa < 1:
            raise ConfigError("trial counts must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.mode == "statistic_level":
            if self.j_pre is None or self.j_post is None:
                raise ConfigError("statistic_level mode needs j_pre and j_post")
        else:
            if self.stream is None:
                raise ConfigError("matrix_level mode needs a stream spec")
            if self.stream.p != self.family.p or self.stream.n != self.family.n:
                raise ConfigError(
                    f"stream shape ({self.stream.n}, {self.stream.p}) does not "
                    f"match family ({self.family.n}, {self.family.p})")


@dataclass(frozen=True)
class EddEstimate:
    mean: float
    stderr: float
    censored_fraction: float


@dataclass(frozen=True)
class MtfaEstimate:
    mean: float
    stderr: float
    censored_fraction: float


@dataclass(frozen=True)
class TradeoffRow:
    """One threshold's row of the delay vs false-alarm trade-off table."""

    threshold_a: float
    edd_mean: float
    edd_stderr: float
    mtfa_mean: float
    mtfa_stderr: float
    censored_fraction: float
    j_post_estimate: float | None
    kl_ij: float | None
    seed: int


TRADEOFF_CSV_HEADER = ("threshold_a,edd_mean,edd_stderr,mtfa_mean,"
                       "mtfa_stderr,censored_fraction,j_post_estimate,"
                       "kl_ij,seed")
KAPPA_CSV_HEADER = "j,kappa,integral_value,is_root"


def _resolve_horizon(cfg: RunConfig, threshold_a: float) -> int:
    if cfg.max_steps is not None:
        return cfg.max_steps
    if not math.isfinite(threshold_a):
        return _MAX_HORIZON
    return min(int(50.0 * math.exp(threshold_a)) + 1, _MAX_HORIZON)


def _budget_trials(trials: int, horizon: int, step_budget: float) -> int:
    if trials * horizon <= step_budget:
        return trials
    return max(50, int(step_budget // horizon))


class _StatisticSource:
    """Draws coherence statistics directly from the density family."""

    block = _STAT_BLOCK

    def __init__(self, cfg: RunConfig, role: int, trial: int, j: float):
        self.fp = cfg.family
        self.j = j
        self.rng = substream(cfg.seed, role, trial)

    def draw(self, count: int) -> np.ndarray:
        return vmaxfam.sample_v_batch(self.fp, self.j, self.rng, count)


class _MatrixSource:
    """Draws matrices from a per-trial stream and maps them to statistics."""

    block = _MATRIX_BLOCK

    def __init__(self, cfg: RunConfig, role: int, trial: int, gamma: float):
        trial_seed = int(np.random.SeedSequence(
            entropy=cfg.seed, spawn_key=(role, trial)).generate_state(1)[0])
        spec = dataclasses.replace(cfg.stream, gamma=gamma, seed=trial_seed)
        self.sampler = _StreamSampler(spec)
        self.delta = cfg.family.delta
        self.next_m = 1

    def draw(self, count: int) -> np.ndarray:
        out = np.empty(count)
        for i in range(count):
            x = self.sampler.matrix_at(self.next_m)
            out[i] = max_knn_coherence(sample_correlation(x), self.delta)
            self.next_m += 1
        return out


def _make_source(cfg: RunConfig, role: int, trial: int):
    if cfg.mode == "statistic_level":
        j = cfg.j_post if role == STREAM_EDD else cfg.j_pre
        return _StatisticSource(cfg, role, trial, j)
    gamma = 1.0 if role == STREAM_EDD else math.inf
    return _MatrixSource(cfg, role, trial, gamma)


def _trial_stop_times(cfg: RunConfig, role: int, trial: int,
                      thresholds, horizons) -> list[int | None]:
    """Stopping time per threshold on one sample path; None means censored.

    Runs the statistic trajectory once, stopping as soon as the largest
    threshold is crossed (crossings of every smaller threshold happen no
    later), and reads each threshold's first crossing from the trajectory.
    """
    fam = VStatFamily(cfg.family)
    boundaries = admissible_boundaries(fam, cfg.glr)
    source = _make_source(cfg, role, trial)
    horizon = max(horizons)
    a_max = max(thresholds)
    prefix = np.zeros(horizon + 1)
    stats = np.empty(horizon)
    m = 0
    crossed = False
    while m < horizon and not crossed:
        block = source.draw(min(source.block, horizon - m))
        t_vals = np.atleast_1d(fam.suff_stat(block))
        for t in t_vals:
            prefix[m + 1] = prefix[m] + t
            m += 1
            lo = 1 if cfg.glr.window is None else max(1, m - cfg.glr.window + 1)
            stats[m - 1] = _scan(fam, cfg.glr, boundaries, prefix, m, lo)
            if stats[m - 1] > a_max:
                crossed = True
                break
    trajectory = stats[:m]
    stops: list[int | None] = []
    for a, h in zip(thresholds, horizons):
        hits = np.flatnonzero(trajectory[:h] > a)
        stops.append(int(hits[0]) + 1 if hits.size else None)
    return stops


def _run_trials(cfg: RunConfig, role: int, trials: int, thresholds, horizons,
                workers: int = 1) -> np.ndarray:
    """(trials, thresholds) array of stopping times, censored entries at the
    per-threshold horizon."""
    args = [(cfg, role, t, tuple(thresholds), tuple(horizons))
            for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_worker, args, chunksize=8))
    else:
        rows = [_trial_worker(a) for a in args]
    out = np.empty((trials, len(thresholds)))
    for t, stops in enumerate(rows):
        for k, (stop, h) in enumerate(zip(stops, horizons)):
            out[t, k] = h if stop is None else stop
    return out


def _trial_worker(args):
    cfg, role, trial, thresholds, horizons = args
    return _trial_stop_times(cfg, role, trial, thresholds, horizons)


def estimate_edd(cfg: RunConfig, workers: int = 1,
                 step_budget: float = 2e8) -> EddEstimate:
    """Expected detection delay with the change at the first sample.

    Change point gamma is forced to 1 (the worst case for this rule), so the
    delay of a trial is its stopping time minus 1. Censored trials are
    counted at the horizon and flagged through ``censored_fraction``.
    """
    a = cfg.glr.threshold_a
    horizon = _resolve_horizon(cfg, a)
    trials = _budget_trials(cfg.trials_edd, horizon, step_budget)
    stops = _run_trials(cfg, STREAM_EDD, trials, [a], [horizon], workers)
    delays = stops[:, 0] - 1.0
    censored = float(np.mean(stops[:, 0] >= horizon))
    stderr = float(delays.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return EddEstimate(float(delays.mean()), stderr, censored)


def estimate_mtfa(cfg: RunConfig, workers: int = 1,
                  step_budget: float = 2e8) -> MtfaEstimate:
    """Mean time to false alarm: mean stopping time with no change ever.

    Trials still running at the horizon are counted at the horizon, making
    the reported mean a lower-bound estimate; the censored fraction is
    always reported alongside.
    """
    a = cfg.glr.threshold_a
    horizon = _resolve_horizon(cfg, a)
    trials = _budget_trials(cfg.trials_mtfa, horizon, step_budget)
    stops = _run_trials(cfg, STREAM_MTFA, trials, [a], [horizon], workers)
    times = stops[:, 0]
    censored = float(np.mean(times >= horizon))
    stderr = float(times.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MtfaEstimate(float(times.mean()), stderr, censored)


def _estimate_j_post(cfg: RunConfig) -> float:
    """MLE of the post-change parameter from a dedicated calibration pool.

    Uses its own substream and fixed-size pool, independent of the detector
    trials, so the estimate carries no stopping-time selection bias.
    """
    source = _MatrixSource(cfg, STREAM_CALIBRATION, 0, gamma=1.0)
    samples = source.draw(_CALIBRATION_POOL)
    return vmaxfam.mle_j(cfg.family, samples)


def sweep(cfg: RunConfig, thresholds, workers: int = 1,
          step_budget: float = 2e8) -> list[TradeoffRow]:
    """Delay/false-alarm trade-off rows, one per threshold.

    All thresholds share the same sample paths, so a single-threshold sweep
    reproduces ``estimate_edd``/``estimate_mtfa`` exactly and the columns
    are monotone in the threshold by construction. In matrix mode the
    post-change parameter is also estimated by maximum likelihood from a
    calibration pool of post-change statistics.
    """
    thresholds = [float(a) for a in thresholds]
    if not thresholds:
        raise ConfigError("sweep needs at least one threshold")
    horizons = [_resolve_horizon(cfg, a) for a in thresholds]
    worst = max(horizons)
    trials_edd = _budget_trials(cfg.trials_edd, worst, step_budget)
    trials_mtfa = _budget_trials(cfg.trials_mtfa, worst, step_budget)
    edd_stops = _run_trials(cfg, STREAM_EDD, trials_edd, thresholds,
                            horizons, workers)
    mtfa_stops = _run_trials(cfg, STREAM_MTFA, trials_mtfa, thresholds,
                             horizons, workers)
    if cfg.mode == "matrix_level":
        j_est = _estimate_j_post(cfg)
        kl = vmaxfam.kl_divergence(j_est)
    else:
        j_est = None
        kl = vmaxfam.kl_divergence(cfg.j_post)
    rows = []
    for k, a in enumerate(thresholds):
        delays = edd_stops[:, k] - 1.0
        times = mtfa_stops[:, k]
        rows.append(TradeoffRow(
            threshold_a=a,
            edd_mean=float(delays.mean()),
            edd_stderr=float(delays.std(ddof=1) / math.sqrt(trials_edd))
            if trials_edd > 1 else 0.0,
            mtfa_mean=float(times.mean()),
            mtfa_stderr=float(times.std(ddof=1) / math.sqrt(trials_mtfa))
            if trials_mtfa > 1 else 0.0,
            censored_fraction=float(np.mean(times >= horizons[k])),
            j_post_estimate=j_est,
            kl_ij=kl,
            seed=cfg.seed,
        ))
    return rows


def kappa_curve(fam, theta0: float, g, j_values, kappa_grid) -> list[tuple]:
    """Table behind the tilted-integral figure: one row (j, kappa, value,
    is_root) per grid point per parameter, plus each located root."""
    rows = []
    for j in j_values:
        for kappa in kappa_grid:
            value = misspec.tilted_integral(fam, float(j), theta0,
                                            float(kappa), g)
            rows.append((float(j), float(kappa), value, False))
        root = misspec.kappa_root(fam, float(j), theta0, g)
        if root is not None:
            rows.append((float(j), root, 1.0, True))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return f"{value:.9g}"


def tradeoff_csv(rows: list[TradeoffRow]) -> str:
    lines = [TRADEOFF_CSV_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (
            r.threshold_a, r.edd_mean, r.edd_stderr, r.mtfa_mean,
            r.mtfa_stderr, r.censored_fraction, r.j_post_estimate,
            r.kl_ij, r.seed)))
    return "\n".join(lines) + "\n"


def kappa_csv(rows: list[tuple]) -> str:
    lines = [KAPPA_CSV_HEADER]
    for j, kappa, value, is_root in rows:
        lines.append(",".join((_fmt(j), _fmt(kappa), _fmt(value),
                               _fmt(bool(is_root)))))
    return "\n".join(lines) + "\n"
