"""
Tests for the perturbation families, the rate fits and the rate table files.
"""

import math

import numpy as np
import pytest

from cdlab_experiments import (AUDIT_COLUMNS, RATE_COLUMNS, FamilyName, RateLaw, analytic_values,
                               build_family_model, envelope_constant, family_dimension, family_law, fit_rate,
                               resolution_check, run_family, write_rate_table)
from cdlab_result import RateRow, RateTable
from cdlab_utils import read_csv


def _synthetic_table(eps, w1) -> RateTable:
    rows = [RateRow(family='synthetic', delta=float(e), eps=float(e), w1=float(w), deficit_l1=0.0, thm_rhs=1.0,
                    n=0, cd_margin=0.0, passed=True, w1_grid=float(w)) for e, w in zip(eps, w1)]
    return RateTable(family='synthetic', dim=3.0, n=0, rows=rows)


@pytest.mark.slow
def test_beta_scaled_matches_its_closed_form():
    table = run_family(FamilyName.BETA_SCALED, n=2000, workers=2)
    assert table.passed
    for row in table.rows:
        eps, w1 = analytic_values(FamilyName.BETA_SCALED, row.delta, 3.0)
        assert row.eps == pytest.approx(eps, rel=1e-3)
        assert row.w1_grid == pytest.approx(row.delta * 4.0 / (3.0 * math.pi), rel=1e-2)
        assert row.w1_grid == pytest.approx(w1, rel=1e-2)
        assert row.w1 <= row.end_to_end_rhs * 1.01 + row.w1_floor
    assert fit_rate(table, RateLaw.LINEAR_EPS).exponent == pytest.approx(1.0, abs=0.05)


@pytest.mark.slow
def test_gauss_stiff_rate():
    table = run_family(FamilyName.GAUSS_STIFF, n=2000, workers=2)
    assert table.passed
    for row in table.rows:
        assert row.eps == pytest.approx(row.delta, rel=1e-3)
        assert row.w1_grid == pytest.approx((1.0 - (1.0 + row.delta) ** -0.5) * math.sqrt(2.0 / math.pi), rel=1e-2)
    assert fit_rate(table, RateLaw.LINEAR_EPS).exponent == pytest.approx(1.0, abs=0.05)
    assert fit_rate(table, family_law(FamilyName.GAUSS_STIFF)).envelope_constant > 0


@pytest.mark.slow
@pytest.mark.parametrize('family', [FamilyName.BETA_DIM_SHIFT, FamilyName.CAUCHY_DIM_SHIFT])
def test_dimension_shift_families_pass(family):
    table = run_family(family, n=2000, workers=2)
    assert table.passed
    for row in table.rows:
        assert row.eps == pytest.approx(row.analytic_eps, rel=1e-2)
        assert row.w1 <= row.thm_rhs * 1.01 + row.w1_floor


@pytest.mark.slow
def test_phi_perturbed_rows_respect_the_bound():
    table = run_family(FamilyName.BETA_PHI_PERTURBED, [1e-2, 3e-2, 1e-1], n=1000, psi='sin')
    for row in table.rows:
        assert row.cd_margin >= -1e-9
        assert row.eps >= -1e-8
        assert row.w1 <= row.thm_rhs * 1.01 + row.w1_floor


def test_restored_phi_perturbation_keeps_the_condition():
    model = build_family_model(FamilyName.BETA_PHI_PERTURBED, 0.1, 3.0, 'sin')
    assert model.scale > 1.0


def test_linear_fit_recovers_the_constant():
    eps = np.logspace(-3, -1, 5)
    fit = fit_rate(_synthetic_table(eps, 2.0 * eps), RateLaw.LINEAR_EPS)
    assert fit.exponent == pytest.approx(1.0, abs=1e-10)
    assert fit.constant == pytest.approx(2.0, rel=1e-10)
    assert fit.residual <= 1e-10
    assert fit.envelope_constant == pytest.approx(2.0)


def test_log_fit_recovers_the_constant():
    eps = np.logspace(-4, -1, 6)
    table = _synthetic_table(eps, 3.0 * eps * np.log(2.0 / eps))
    fit = fit_rate(table, RateLaw.EPS_LOG)
    assert fit.exponent == pytest.approx(1.0, abs=1e-10)
    assert fit.constant == pytest.approx(3.0, rel=1e-10)
    assert envelope_constant(table, RateLaw.EPS_LOG) == pytest.approx(3.0)


def test_degenerate_fits_are_rejected():
    eps = np.logspace(-3, -1, 5)
    with pytest.raises(ValueError):
        fit_rate(_synthetic_table(eps, np.zeros_like(eps)), RateLaw.LINEAR_EPS)
    with pytest.raises(ValueError):
        fit_rate(_synthetic_table(eps[:3], eps[:3]), RateLaw.LINEAR_EPS)
    narrow = np.linspace(1e-2, 2e-2, 5)
    with pytest.raises(ValueError):
        fit_rate(_synthetic_table(narrow, narrow), RateLaw.LINEAR_EPS)
    with pytest.raises(ValueError):
        fit_rate(_synthetic_table(eps, eps), 'quadratic')


def test_rows_outside_the_admissible_range_are_rejected():
    table = run_family(FamilyName.BETA_SCALED, [1e-2, 1.5], n=200)
    good, rejected = table.rows
    assert good.passed
    assert not rejected.passed
    assert math.isnan(rejected.eps)
    assert rejected.reason
    assert not table.passed


def test_run_family_rejects_bad_arguments():
    with pytest.raises(ValueError):
        run_family(FamilyName.BETA_SCALED, [0.0, 0.1], n=200)
    with pytest.raises(ValueError):
        run_family('beta_rotated', [0.1], n=200)
    with pytest.raises(ValueError):
        run_family(FamilyName.BETA_PHI_PERTURBED, [0.1], n=200, psi='cos')
    with pytest.raises(ValueError):
        family_dimension(FamilyName.BETA_SCALED, 0.5)
    with pytest.raises(ValueError):
        family_dimension(FamilyName.CAUCHY_DIM_SHIFT, -0.5)


def test_family_dimensions_and_laws():
    assert family_dimension(FamilyName.BETA_DIM_SHIFT) == 3.0
    assert math.isinf(family_dimension(FamilyName.GAUSS_QUARTIC))
    assert family_dimension(FamilyName.CAUCHY_DIM_SHIFT) == -3.0
    assert family_law(FamilyName.BETA_SCALED) == RateLaw.LINEAR_EPS
    assert family_law(FamilyName.CAUCHY_DIM_SHIFT) == RateLaw.EPS_LOG
    assert analytic_values(FamilyName.GAUSS_QUARTIC, 0.1, math.inf) == (None, None)


@pytest.mark.slow
def test_resolution_check():
    report = resolution_check(FamilyName.BETA_SCALED, [1e-3, 1e-2, 1e-1], n=1000)
    assert report.passed
    assert len(report.rows) == 3
    assert report.max_change < 1e-2


def test_rate_table_files(tmp_path):
    table = run_family(FamilyName.BETA_SCALED, [1e-2, 1e-1], n=200)
    rate_path, audit_path = write_rate_table(table, tmp_path / 'first')
    assert rate_path.name == 'beta_scaled.csv'
    header = rate_path.read_text(encoding='utf-8').splitlines()[0]
    assert header == 'family,delta,eps,w1,deficit_l1,thm_rhs,n,cd_margin,pass'
    audit_header = audit_path.read_text(encoding='utf-8').splitlines()[0]
    assert audit_header == 'family,delta,eps,deficit_l1,lh_l1,paper_rhs,pass'
    assert list(read_csv(rate_path).columns) == RATE_COLUMNS
    assert list(read_csv(audit_path).columns) == AUDIT_COLUMNS
    frame = read_csv(rate_path)
    np.testing.assert_array_equal(frame['eps'].to_numpy(), [row.eps for row in table.rows])

    again, _ = write_rate_table(table, tmp_path / 'second')
    assert again.read_bytes() == rate_path.read_bytes()


def test_rows_measure_w1_against_the_target_law():
    table = run_family(FamilyName.GAUSS_STIFF, [1e-2, 1e-1], n=200)
    for row in table.rows:
        assert row.w1_floor > 0
        assert abs(row.w1 - row.w1_grid) <= row.w1_floor + 1e-12
    assert table.rows[0].w1_floor == table.rows[1].w1_floor


def test_threads_do_not_change_the_rows():
    deltas = [1e-2, 3e-2, 1e-1]
    serial = run_family(FamilyName.GAUSS_STIFF, deltas, n=200, workers=1)
    threaded = run_family(FamilyName.GAUSS_STIFF, deltas, n=200, workers=3)
    assert [row.model_dump() for row in threaded.rows] == [row.model_dump() for row in serial.rows]
