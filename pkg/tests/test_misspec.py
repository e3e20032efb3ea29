"""Tests for the misspecification (kappa exponent and bound) machinery."""

import math

import numpy as np
import pytest
from scipy import optimize

from maxcoh.errors import (DomainError, MonotonicityViolation,
                           NonpositiveDrift)
from maxcoh.glr import ExpFamily, GaussianMeanFamily, GlrConfig, VStatFamily
from maxcoh.misspec import (BoundReport, CallableDensity, ParametricDensity,
                            UncertaintyClass, build_bound_report,
                            build_kappa_report, check_assumption_monotone_kl,
                            delay_upper_bound, drift_integral, far_lower_bound,
                            i_min_boundary, kappa_g_boundary, kappa_gaussian,
                            kappa_root, kappa_star, kl_to_null, tilted_integral)
from maxcoh.vmaxfam import FamilyParams

GAUSS = GaussianMeanFamily()
FP = FamilyParams(n=10, p=100, delta=1)
VFAM = VStatFamily(FP)
VCFG = GlrConfig(theta0=1.0, epsilon=1.5, threshold_a=5.0)
GCFG = GlrConfig(theta0=0.0, epsilon=1.0, threshold_a=5.0)


def surrogate_root_oracle(theta, theta0, j_g):
    """Independent root of (theta/theta0)^k * j_g = j_g + k (theta - theta0)."""
    def gap(k):
        rhs = j_g + k * (theta - theta0)
        if rhs <= 0:
            return math.inf
        return k * math.log(theta / theta0) + math.log(j_g) - math.log(rhs)

    hi = 0.25
    while gap(hi) < 0:
        hi *= 2.0
    return optimize.brentq(gap, 1e-9, hi, xtol=1e-12)


# --------------------------------------------------------------------------
# kappa_root
# --------------------------------------------------------------------------

def test_kappa_is_one_when_true_density_is_null():
    for theta in (0.5, 1.0, -2.0):
        root = kappa_root(GAUSS, theta, 0.0, ParametricDensity(GAUSS, 0.0))
        assert root == pytest.approx(1.0, abs=1e-6)
    for theta in (0.3, 2.5, 6.0):
        root = kappa_root(VFAM, theta, 1.0, ParametricDensity(VFAM, 1.0))
        assert root == pytest.approx(1.0, abs=1e-6)


def test_kappa_v_family_paper_anchor():
    root = kappa_root(VFAM, 2.5, 1.0, ParametricDensity(VFAM, 1.4))
    assert root == pytest.approx(0.33, abs=0.01)


def test_kappa_v_family_derived_anchor():
    oracle = surrogate_root_oracle(1.9, 1.0, 1.1)
    root = kappa_root(VFAM, 1.9, 1.0, ParametricDensity(VFAM, 1.1))
    assert root == pytest.approx(0.73, abs=0.01)
    assert root == pytest.approx(oracle, abs=1e-3)


def test_kappa_quadrature_matches_surrogate_grid():
    for theta, j_g in [(2.5, 1.31), (5.0, 1.1), (10.0, 1.1), (0.4, 1.1)]:
        root = kappa_root(VFAM, theta, 1.0, ParametricDensity(VFAM, j_g))
        assert root == pytest.approx(surrogate_root_oracle(theta, 1.0, j_g),
                                     abs=1e-3)


def test_kappa_root_residual_small():
    root = kappa_root(VFAM, 2.5, 1.0, ParametricDensity(VFAM, 1.31))
    value = tilted_integral(VFAM, 2.5, 1.0, root, ParametricDensity(VFAM, 1.31))
    assert abs(value - 1.0) < 1e-6


def test_kappa_root_absent_when_drift_nonnegative():
    # g sits beyond theta: the likelihood ratio drifts up, no positive root
    root = kappa_root(GAUSS, 1.0, 0.0, ParametricDensity(GAUSS, 0.8))
    assert root is None


def test_kappa_root_requires_distinct_parameters():
    with pytest.raises(DomainError):
        kappa_root(GAUSS, 0.0, 0.0, ParametricDensity(GAUSS, 0.1))


def test_tilted_integral_at_zero_is_exactly_one():
    assert tilted_integral(VFAM, 2.5, 1.0, 0.0,
                           ParametricDensity(VFAM, 1.4)) == 1.0


def test_kappa_root_callable_density_matches_member():
    # same Gaussian density fed as a raw callable
    pdf = lambda y: np.exp(-(y - 0.1) ** 2 / 2.0) / math.sqrt(2 * math.pi)
    member = kappa_root(GAUSS, 1.0, 0.0, ParametricDensity(GAUSS, 0.1))
    generic = kappa_root(GAUSS, 1.0, 0.0,
                         CallableDensity(pdf, (-np.inf, np.inf)))
    assert generic == pytest.approx(member, abs=1e-6)


# --------------------------------------------------------------------------
# Gaussian closed forms
# --------------------------------------------------------------------------

def test_kappa_gaussian_identity_and_anchor():
    assert kappa_gaussian(2.7, 0.0, 0.0) == pytest.approx(1.0)
    assert kappa_gaussian(1.0, 0.0, 0.1) == pytest.approx(0.8)
    assert kappa_gaussian(1.0, 0.0, 0.6) is None  # nonpositive formula


def test_kappa_gaussian_matches_quadrature_grid():
    for theta in (-2.0, -1.0, 1.0, 2.0):
        for tilde in (-0.2, 0.1):
            closed = kappa_gaussian(theta, 0.0, tilde)
            root = kappa_root(GAUSS, theta, 0.0,
                              ParametricDensity(GAUSS, tilde))
            if closed is None:
                assert root is None
            else:
                assert root == pytest.approx(closed, abs=1e-6)


# --------------------------------------------------------------------------
# kappa_g and kappa_star
# --------------------------------------------------------------------------

def test_kappa_g_boundary_gaussian_formula():
    value = kappa_g_boundary(GAUSS, GCFG, ParametricDensity(GAUSS, 0.1))
    assert value == pytest.approx(1.0 - 2.0 * 0.1 / 1.0, abs=1e-6)


def test_kappa_g_boundary_v_family_paper_anchor():
    value = kappa_g_boundary(VFAM, VCFG, ParametricDensity(VFAM, 1.31))
    assert value == pytest.approx(0.47, abs=0.01)


def test_kappa_g_boundary_null_density():
    assert kappa_g_boundary(VFAM, VCFG, ParametricDensity(VFAM, 1.0)) \
        == pytest.approx(1.0, abs=1e-6)


def test_kappa_g_boundary_detects_interior_minimum():
    # a pre-change density on the far side of the null: kappa decreases
    # toward 1 deep inside the region, so boundary minimality fails
    with pytest.raises(MonotonicityViolation):
        kappa_g_boundary(VFAM, VCFG, ParametricDensity(VFAM, 0.6))


def test_kappa_star_gaussian_third():
    value = kappa_star(GAUSS, GCFG, UncertaintyClass(radius=1.0 / 3.0))
    assert value == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_kappa_star_v_family_paper_anchor():
    value = kappa_star(VFAM, VCFG, UncertaintyClass(radius=0.4))
    assert value == pytest.approx(0.33, abs=0.01)


def test_kappa_star_zero_radius():
    assert kappa_star(VFAM, VCFG, UncertaintyClass(radius=0.0)) == 1.0


def test_fig2_root_ordering():
    cfg = GlrConfig(theta0=1.0, epsilon=0.9, threshold_a=5.0)
    g = ParametricDensity(VFAM, 1.1)
    roots = {j: kappa_root(VFAM, j, 1.0, g) for j in (0.4, 1.9, 5.0, 10.0, 15.0)}
    above = {j: r for j, r in roots.items() if j > 1}
    assert min(above, key=above.get) == 1.9
    assert all(r < 1.0 for r in above.values())
    assert roots[0.4] > 1.0


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

def test_far_lower_bound_values():
    assert far_lower_bound(1.0, 0.0, 0.5) == pytest.approx(0.5)
    a = math.log(1000.0)
    expected = 1000.0 / (2.0 * (a / 0.5 + 1.0))  # independent arithmetic
    assert far_lower_bound(1.0, a, 0.5) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(33.75, abs=0.01)
    with pytest.raises(DomainError):
        far_lower_bound(0.0, 1.0, 0.5)


def test_i_min_boundary():
    # V family, theta0=1, eps=1.5: only J=2.5 is admissible
    expected = math.log(2.5) + 1.0 / 2.5 - 1.0
    assert i_min_boundary(VFAM, VCFG) == pytest.approx(expected, rel=1e-12)
    # Gaussian: both boundaries, I = eps^2/2
    assert i_min_boundary(GAUSS, GCFG) == pytest.approx(0.5, rel=1e-12)


def test_delay_upper_bound_v_family():
    g = ParametricDensity(VFAM, 3.5)
    kl = math.log(3.5) + 1.0 / 3.5 - 1.0
    bound = delay_upper_bound(VFAM, 1.0, 3.5, g, 10.0)
    assert bound == pytest.approx(10.0 / kl, rel=1e-9)
    assert bound == pytest.approx(18.57, abs=0.01)


def test_delay_upper_bound_gaussian():
    g = ParametricDensity(GAUSS, 1.0)
    assert delay_upper_bound(GAUSS, 0.0, 1.0, g, 4.0) == pytest.approx(8.0,
                                                                       rel=1e-9)


def test_delay_upper_bound_nonpositive_drift():
    # true density below the null: the ratio drifts down
    g = ParametricDensity(VFAM, 0.5)
    with pytest.raises(NonpositiveDrift):
        delay_upper_bound(VFAM, 1.0, 3.5, g, 4.0)


def test_drift_integral_quadrature_matches_closed_form():
    g = ParametricDensity(VFAM, 3.5)
    closed = drift_integral(VFAM, 3.5, 1.0, g)
    pdf = lambda v: np.exp(VFAM.log_density(v, 3.5))
    generic = drift_integral(VFAM, 3.5, 1.0, CallableDensity(pdf, (0.0, 1.0)))
    assert generic == pytest.approx(closed, abs=1e-8)


def test_monotone_kl_check():
    assert check_assumption_monotone_kl(GAUSS, 0.0, np.linspace(-4, 4, 33))
    assert check_assumption_monotone_kl(VFAM, 1.0,
                                        [0.1, 0.4, 0.8, 1.5, 3.0, 8.0, 20.0])

    class Wobbly(ExpFamily):
        # b(theta) = theta^2/2 + sin(2 theta): not convex, I not monotone
        param_domain = (-math.inf, math.inf)

        def suff_stat(self, y):
            return y

        def log_partition(self, theta):
            return theta * theta / 2.0 + np.sin(2.0 * theta)

        def log_partition_deriv(self, theta):
            return theta + 2.0 * math.cos(2.0 * theta)

        def base_measure_logdensity(self, y):
            return 0.0

    assert not check_assumption_monotone_kl(Wobbly(), 0.0,
                                            np.linspace(0.0, 4.0, 41))


def test_kl_to_null_gaussian_quadratic():
    for theta in (-2.0, 0.5, 3.0):
        assert kl_to_null(GAUSS, theta, 0.0) == pytest.approx(theta ** 2 / 2.0,
                                                              rel=1e-12)


# --------------------------------------------------------------------------
# report assembly
# --------------------------------------------------------------------------

def test_kappa_report_invariants():
    g = ParametricDensity(VFAM, 1.31)
    report = build_kappa_report(VFAM, VCFG, g, UncertaintyClass(radius=0.4),
                                extra_thetas=(3.0, 5.0))
    assert report.kappa_star <= report.kappa_g + 1e-9
    for value in report.kappa_theta_g.values():
        assert report.kappa_g <= value + 1e-9


def test_kappa_report_null_density_all_ones():
    report = build_kappa_report(GAUSS, GCFG, ParametricDensity(GAUSS, 0.0))
    assert report.kappa_g == pytest.approx(1.0, abs=1e-8)
    for value in report.kappa_theta_g.values():
        assert value == pytest.approx(1.0, abs=1e-8)


def test_bound_report_fields():
    report = build_bound_report(VFAM, VCFG, kappa=0.47, theta_g=3.5)
    assert isinstance(report, BoundReport)
    assert report.far_lower > 0
    assert report.delay_upper > 0
    assert report.drift == pytest.approx(math.log(3.5) + 1 / 3.5 - 1, rel=1e-9)
    assert report.i_min == pytest.approx(i_min_boundary(VFAM, VCFG))
