"""
Tests for Stein operators, the Beta discrepancy, the Cauchy Stein solution and the constants.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from cdlab_measures import QuadratureMeasure, target_law, target_measure, w1_distance
from cdlab_result import CDLabAuditStatus
from cdlab_stein import (PiecewiseLinear, beta_discrepancy, beta_stein_bound, beta_test_class, cauchy_stein_solve,
                         explicit_constants, gauss_stein_bound, piecewise_mean, random_lipschitz,
                         stein_bound_audit, stein_factor_profile, stein_operator_apply, tail_bound_audit)
from cdlab_utils import derivative_uniform

POLYNOMIALS = [
    (lambda x: x, lambda x: np.ones_like(x)),
    (lambda x: x * x, lambda x: 2.0 * x),
    (lambda x: x ** 3, lambda x: 3.0 * x * x),
]


@pytest.mark.parametrize('N', [3.0, 5.0])
@pytest.mark.parametrize('g, dg', POLYNOMIALS)
def test_beta_operator_vanishes_on_the_target(N, g, dg):
    measure = target_measure('beta', 400, N)
    assert abs(stein_operator_apply('beta', g, dg, measure, N)) <= 1e-8


@pytest.mark.parametrize('g, dg', POLYNOMIALS)
def test_gauss_operator_vanishes_on_the_target(g, dg):
    measure = target_measure('gauss', 2000)
    assert abs(stein_operator_apply('gauss', g, dg, measure)) <= 1e-8


@pytest.mark.parametrize('g, dg', POLYNOMIALS[:2])
def test_cauchy_operator_vanishes_on_the_target(g, dg):
    measure = target_measure('cauchy', 2000, -6.0)
    assert abs(stein_operator_apply('cauchy', g, dg, measure, -6.0)) <= 1e-8


def test_unknown_stein_target():
    with pytest.raises(ValueError):
        stein_operator_apply('uniform', np.zeros(1), np.zeros(1), QuadratureMeasure([0.0], [1.0]))


def test_beta_test_class():
    test_class = beta_test_class(3.0)
    assert test_class.sup_bound == pytest.approx(2.0 / 3.0)
    assert test_class.lip_bound == 5.0
    with pytest.raises(ValueError):
        beta_test_class(1.0)


def test_discrepancy_of_the_target_is_small():
    measure = target_measure('beta', 2000, 3.0, mapping='direct')
    result = beta_discrepancy(measure, 3.0)
    assert result.value <= 1e-2
    assert result.grid.size == 201


def test_discrepancy_of_a_point_mass():
    assert beta_discrepancy(QuadratureMeasure([0.0], [1.0]), 2.0).value == pytest.approx(2.0, rel=1e-6)


def test_discrepancy_grows_with_contraction():
    measure = target_measure('beta', 2000, 3.0)
    mild = QuadratureMeasure(0.9 * measure.points, measure.weights)
    strong = QuadratureMeasure(0.8 * measure.points, measure.weights)
    mild_value = beta_discrepancy(mild, 3.0).value
    assert beta_discrepancy(strong, 3.0).value > mild_value
    assert mild_value >= w1_distance(mild, measure)


def test_discrepancy_needs_support_in_the_interval():
    with pytest.raises(ValueError):
        beta_discrepancy(QuadratureMeasure([1.5], [1.0]), 3.0)


def test_piecewise_linear():
    h = PiecewiseLinear([0.0], [-1.0, 1.0])
    np.testing.assert_allclose(h(np.array([-2.0, 0.0, 3.0])), [2.0, 0.0, 3.0])
    np.testing.assert_array_equal(h.derivative(np.array([-1.0, 1.0])), [-1.0, 1.0])
    assert h.lipschitz == 1.0
    shifted = PiecewiseLinear([-1.0, 1.0], [0.0, 2.0, 0.0], value_at_zero=0.5)
    np.testing.assert_allclose(shifted(np.array([-5.0, 0.0, 5.0])), [-1.5, 0.5, 2.5])
    with pytest.raises(ValueError):
        PiecewiseLinear([0.0], [1.0])


@pytest.mark.parametrize('N', [-1.5, -3.0, -6.0])
def test_identity_source_has_a_constant_solution(N):
    solution = cauchy_stein_solve(PiecewiseLinear([], [1.0]), N, np.linspace(-20.0, 20.0, 401))
    np.testing.assert_allclose(solution.g, 1.0 / N, atol=1e-7)
    assert solution.residual <= 1e-10
    assert abs(solution.h_mean) <= 1e-10


def test_random_sources_solve_the_equation():
    rng = np.random.default_rng(7)
    grid = np.linspace(-20.0, 20.0, 2001)
    for _ in range(5):
        h = random_lipschitz(rng)
        assert h.lipschitz <= 1.0
        solution = cauchy_stein_solve(h, -3.0, grid)
        assert solution.residual <= 1e-8
        assert np.all(np.isfinite(solution.g))


def test_source_mean_is_exact():
    law = target_law('cauchy', -3.0)
    h = PiecewiseLinear([-1.0, 0.5, 2.0], [0.0, 1.0, -0.5, 0.0], value_at_zero=0.3)

    def weighted(t):
        return float(h(t)) * law.pdf(t)

    pieces = [integrate.quad(weighted, -np.inf, -1.0)[0],
              integrate.quad(weighted, -1.0, 2.0, points=[0.5])[0],
              integrate.quad(weighted, 2.0, np.inf)[0]]
    solution = cauchy_stein_solve(h, -3.0, np.linspace(-20.0, 20.0, 401))
    assert solution.h_mean == pytest.approx(sum(pieces), abs=1e-9)
    assert piecewise_mean(PiecewiseLinear([0.0], [-1.0, 1.0]), law) == pytest.approx(law.mean_abs(), rel=1e-12)


def test_derivative_matches_finite_differences():
    grid = np.linspace(-10.0, 10.0, 4001)
    h = PiecewiseLinear([-1.0, 0.5, 2.0], [0.0, 1.0, -0.5, 0.0], value_at_zero=0.3)
    solution = cauchy_stein_solve(h, -3.0, grid)
    np.testing.assert_allclose(derivative_uniform(solution.g, grid[1] - grid[0]), solution.dg, atol=2e-2)
    assert solution.residual <= 1e-10


@pytest.mark.parametrize('N', [-1.5, -3.0])
@pytest.mark.parametrize('nu', [
    QuadratureMeasure([-3.0, 0.0, 7.0], [0.2, 0.5, 0.3]),
    QuadratureMeasure(np.linspace(-10.0, 10.0, 101), np.ones(101)),
    QuadratureMeasure(np.random.default_rng(3).normal(0.5, 2.0, 50), np.random.default_rng(4).uniform(0.1, 1.0, 50)),
])
def test_operator_integral_equals_the_centered_source(N, nu):
    h = random_lipschitz(np.random.default_rng(13))
    solution = cauchy_stein_solve(h, N, nu.points)
    centered = nu.integrate(h(nu.points) - solution.h_mean)
    applied = stein_operator_apply('cauchy', solution.g, solution.dg, nu, N)
    assert abs(centered - applied) <= solution.residual + 1e-12


def test_profile_bounds_the_solutions():
    grid = np.linspace(-20.0, 20.0, 2001)
    profile = stein_factor_profile(-3.0, grid)
    rng = np.random.default_rng(11)
    for _ in range(5):
        solution = cauchy_stein_solve(random_lipschitz(rng), -3.0, grid)
        lipschitz = max(solution.lipschitz, 1e-300)
        assert solution.sup_g / lipschitz <= profile['sup_sup'] * (1.0 + 1e-9)
        assert solution.sup_dg / lipschitz <= profile['lip_sup'] * (1.0 + 1e-9)


def test_stein_bound_audit_passes_and_is_deterministic():
    report = stein_bound_audit(-3.0, 12, seed=5)
    assert report.status == CDLabAuditStatus.PASS
    assert report.violations == 0
    assert report.max_residual <= 1e-8
    assert [row.sample for row in report.rows] == list(range(12))
    threaded = stein_bound_audit(-3.0, 12, seed=5, workers=3)
    assert [row.g_ratio for row in threaded.rows] == [row.g_ratio for row in report.rows]
    assert threaded.max_gprime_ratio == report.max_gprime_ratio


@pytest.mark.slow
@pytest.mark.parametrize('N', [-1.5, -2.0, -3.0, -5.0])
def test_stein_bound_audit_over_a_hundred_sources(N):
    report = stein_bound_audit(N, 100, seed=2024, workers=4)
    assert report.sample_count == 100
    assert len(report.rows) == 100
    assert report.violations == 0
    assert report.status == CDLabAuditStatus.PASS
    assert report.max_residual <= 1e-10


def test_stein_bound_audit_rejects_bad_arguments():
    with pytest.raises(ValueError):
        stein_bound_audit(-0.5, 10, seed=1)
    with pytest.raises(ValueError):
        stein_bound_audit(-3.0, 0, seed=1)


@pytest.mark.parametrize('N', [-1.5, -2.0, -3.0, -5.0])
def test_tail_bounds(N):
    report = tail_bound_audit(N)
    assert report.status == CDLabAuditStatus.PASS
    assert report.grid_size == 10000


def test_beta_constants():
    constants = explicit_constants(3.0)
    assert constants.thm_beta_const == 8.0
    assert constants.C_prop34 == pytest.approx(4.1325, abs=1e-4)
    assert constants.thm35_class == pytest.approx([2.0 / 3.0, 5.0])
    assert constants.B_sobolev == pytest.approx(12.0 / 16.0)
    assert constants.C_ultra == pytest.approx(3.5 ** 2)
    assert constants.Z_plus == pytest.approx(math.pi / 2.0)
    assert constants.lem51_factor is None


def test_cauchy_constants():
    constants = explicit_constants(-3.0)
    assert constants.lem51_factor == pytest.approx(64.0 / 3.0)
    assert constants.K_N == pytest.approx(5.5)
    assert constants.L_N == pytest.approx(11.625)
    assert constants.Z_minus == pytest.approx(4.0 / 3.0)
    assert constants.C_N == pytest.approx(2.0)
    assert constants.thm_beta_const is None


def test_no_constants_between_the_regimes():
    constants = explicit_constants(0.5)
    assert constants.dim == 0.5
    assert all(value is None for key, value in constants.get_dict().items() if key != 'dim')


def test_constants_text():
    text = explicit_constants(3.0).to_text()
    assert 'thm_beta_const = 8\n' in text
    assert 'thm35_class = 0.6666666666666666,5\n' in text
    assert 'Z_minus' not in text


def test_governing_bounds():
    assert gauss_stein_bound(0.0, 0.0) == 0.0
    assert gauss_stein_bound(0.5, 1.0) == pytest.approx(5.0)
    assert beta_stein_bound(0.0, 3.0, 3.0, 1.0) == 0.0
    assert beta_stein_bound(0.1, 3.3, 3.0, 2.0) == pytest.approx(0.8 + 0.2)
