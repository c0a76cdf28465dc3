"""
Tests for the eigenfunction deficit, the L¹ spectral inequalities and the Gaussian counterexample.
"""

import math

import numpy as np
import pytest
from scipy import stats

from cdlab_estimates import (DeficitRegime, InequalityRegime, deficit_regime, eigen_deficit, end_to_end_constant,
                             fit_counterexample_constant, hypercontractive_decay_check, l1_spectral_inequality_audit,
                             log_l1_bound, lp_upgrade_audit, ou_counterexample)
from cdlab_models import generator_apply, make_model
from cdlab_result import CDLabAuditStatus
from cdlab_spectral import discretize, eigen_lowest, refined_gap
from cdlab_stein import explicit_constants


def _deficit(model, n=2000, dim=None, mapping=None):
    dec = eigen_lowest(discretize(model, n, mapping), 3)
    return eigen_deficit(model, dec, dim=dim, gap=refined_gap(model, n, dec.op.mapping).lambda1)


@pytest.fixture(scope='module')
def jacobi_modes():
    return eigen_lowest(discretize(make_model('jacobi', N=3.0), 1000), 9)


@pytest.fixture(scope='module')
def gaussian_modes():
    return eigen_lowest(discretize(make_model('gaussian', kappa=1.5), 1000), 11)


def test_deficit_regimes():
    assert deficit_regime(3.0) == DeficitRegime.FINITE
    assert deficit_regime(math.inf) == DeficitRegime.INFINITE
    assert deficit_regime(-3.0) == DeficitRegime.NEGATIVE
    with pytest.raises(ValueError):
        deficit_regime(0.0)


def test_rigid_jacobi_has_no_deficit():
    report = _deficit(make_model('jacobi', N=3.0))
    assert report.regime == DeficitRegime.FINITE
    assert abs(report.eps) <= 1e-6
    assert report.deficit_l1 <= 1e-4
    assert report.identity_l1 <= 1e-4
    assert report.eigen_identity_error <= 1e-8
    assert report.f2_l1 == pytest.approx(0.25, rel=1e-4)
    assert not report.lichnerowicz_fault


def test_rigid_gaussian_has_no_deficit():
    report = _deficit(make_model('gaussian'))
    assert report.regime == DeficitRegime.INFINITE
    assert report.h_mean == pytest.approx(1.0, abs=1e-5)
    assert report.deficit_l1 <= 1e-3


def test_rigid_cauchy_has_no_deficit():
    report = _deficit(make_model('cauchy', N=-3.0), n=4000)
    assert report.regime == DeficitRegime.NEGATIVE
    assert report.deficit_l1 <= 1e-3


def test_discrete_generator_matches_the_pointwise_generator():
    model = make_model('jacobi', N=3.0)
    op = discretize(model, 2000)
    x = op.x
    pointwise = generator_apply(model, x, x * x, df=2.0 * x, d2f=np.full_like(x, 2.0))
    np.testing.assert_allclose(pointwise, 2.0 - 8.0 * x * x, atol=1e-12)
    inner = slice(200, -200)
    np.testing.assert_allclose(op.apply_generator(x * x)[inner], pointwise[inner], atol=1e-3)


def test_scaled_sphere_deficit_within_bounds():
    model = make_model('scaled', base=make_model('jacobi', N=3.0), r=0.99)
    report = _deficit(model, dim=3.0)
    assert report.eps == pytest.approx(3.0 * (1.0 / 0.99 ** 2 - 1.0), rel=1e-4)
    assert report.lh_l1 <= report.paper_rhs
    assert report.deficit_l1 <= report.deficit_bound
    assert report.status == CDLabAuditStatus.PASS


def test_stiff_gaussian_deficit_within_bounds():
    report = _deficit(make_model('gaussian', kappa=1.05), mapping='truncate(10)')
    assert report.eps == pytest.approx(0.05, rel=1e-4)
    assert report.lh_l1 <= report.paper_rhs
    assert report.status == CDLabAuditStatus.PASS


def test_deficit_requires_the_matching_decomposition():
    dec = eigen_lowest(discretize(make_model('jacobi', N=3.0), 200), 3)
    with pytest.raises(ValueError):
        eigen_deficit(make_model('jacobi', N=3.0), dec)


def test_l1_poincare_on_the_eigenfunction(jacobi_modes):
    op = jacobi_modes.op
    audit = l1_spectral_inequality_audit(op, jacobi_modes.vectors[:, 1], InequalityRegime.L1_POINCARE)
    assert audit.passed
    assert audit.constant == pytest.approx(explicit_constants(3.0).C_prop34)
    assert audit.lhs / (audit.rhs / audit.constant) == pytest.approx(1.0 / jacobi_modes.eigenvalues[1], rel=1e-8)


def test_l1_poincare_on_random_combinations(jacobi_modes):
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = jacobi_modes.vectors[:, 1:9] @ rng.standard_normal(8)
        audit = l1_spectral_inequality_audit(jacobi_modes.op, g, InequalityRegime.L1_POINCARE)
        assert audit.passed
        assert audit.ratio < 1.0


def test_l1_audit_rejects_bad_inputs(jacobi_modes):
    op = jacobi_modes.op
    with pytest.raises(ValueError):
        l1_spectral_inequality_audit(op, np.ones(op.n), InequalityRegime.L1_POINCARE)
    with pytest.raises(ValueError):
        l1_spectral_inequality_audit(op, jacobi_modes.vectors[:, 1], InequalityRegime.LOG_L1)
    with pytest.raises(ValueError):
        l1_spectral_inequality_audit(op, jacobi_modes.vectors[:, 1], 'unknown')


def test_log_l1_inequality_reports_a_fitted_constant(gaussian_modes):
    op = gaussian_modes.op
    g = gaussian_modes.vectors[:, 1:11] @ np.linspace(1.0, 0.1, 10)
    fitted = l1_spectral_inequality_audit(op, g, InequalityRegime.LOG_L1, p=4.0)
    assert fitted.fitted
    assert fitted.passed
    assert fitted.constant > 0
    checked = l1_spectral_inequality_audit(op, g, InequalityRegime.LOG_L1, p=4.0, constant=2.0 * fitted.constant)
    assert not checked.fitted
    assert checked.ratio == pytest.approx(0.5)


def test_log_l1_inequality_needs_a_unit_gap():
    model = make_model('phi_perturbed', base=make_model('jacobi', N=3.0), delta=0.0, scale=0.2)
    dec = eigen_lowest(discretize(model, 400), 3)
    with pytest.raises(ValueError):
        l1_spectral_inequality_audit(dec.op, dec.vectors[:, 1], InequalityRegime.LOG_L1, p=2.0)
    with pytest.raises(ValueError):
        hypercontractive_decay_check(dec, dec.vectors[:, 1], 2.0, [0.5])


def test_log_l1_bound():
    assert log_l1_bound(1.0, math.e, 2.0, 1.0) == pytest.approx(2.0)
    assert log_l1_bound(1.0, 0.5, 2.0, 1.0) == pytest.approx(1.0)
    assert log_l1_bound(0.0, 1.0, 2.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        log_l1_bound(1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize('p', [2.0, 4.0])
def test_decay_of_an_eigenfunction(gaussian_modes, p):
    dec = gaussian_modes
    report = hypercontractive_decay_check(dec, dec.vectors[:, 1], p, [0.25, 0.5, 1.0])
    assert report.passed
    assert report.c_p == pytest.approx(1.0, rel=1e-10)
    assert report.rate == pytest.approx(4.0 * (p - 1.0) / p ** 2)
    for row in report.rows:
        assert row.lp_norm == pytest.approx(math.exp(-dec.eigenvalues[1] * row.t) * row.envelope
                                            / math.exp(-report.rate * row.t), rel=1e-8)


def test_lp_upgrade():
    model = make_model('cauchy', N=-3.0)
    op = discretize(model, 2000)
    assert lp_upgrade_audit(op, op.x, 0.5).passed
    assert lp_upgrade_audit(op, np.ones(op.n), 0.5).passed
    dec = eigen_lowest(discretize(make_model('jacobi', N=3.0), 1000), 3)
    audit = lp_upgrade_audit(dec.op, dec.vectors[:, 2], 1.0, lambda1=dec.eigenvalues[1])
    assert audit.passed
    assert audit.poincare_const == pytest.approx(1.0 / dec.eigenvalues[1])
    with pytest.raises(ValueError):
        lp_upgrade_audit(op, op.x, 0.0)


def test_counterexample_operator_norm():
    for r in (1.0, 4.0, 16.0):
        record = ou_counterexample(r)
        assert record.l1_Lf == pytest.approx(2.0 * stats.norm.sf(r), rel=1e-12)
        assert record.l1_f == pytest.approx(record.ratio * record.l1_Lf, rel=1e-12)
    assert ou_counterexample(1.0).log_ratio is None


def test_counterexample_ratio_diverges():
    records = [ou_counterexample(r) for r in (1.0, 2.0, 4.0, 8.0, 16.0)]
    ratios = [record.ratio for record in records]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] >= 1.5 * ratios[1]
    assert fit_counterexample_constant(records) > 0
    with pytest.raises(ValueError):
        fit_counterexample_constant(records[:1])


def test_counterexample_at_large_radius():
    far, farther = ou_counterexample(30.0), ou_counterexample(40.0)
    for record in (far, farther, ou_counterexample(38.0)):
        assert math.isfinite(record.ratio)
        assert math.isfinite(record.l1_f)
        assert record.l1_Lf >= 0.0
    # the ratio grows like log r with O(1/r²) corrections
    assert farther.ratio - far.ratio == pytest.approx(math.log(4.0 / 3.0), abs=5e-3)
    assert farther.l1_Lf == 0.0


def test_counterexample_small_radius_limit():
    # as r -> 0 the ratio tends to ∫_0^∞ √(2π)(1 - Φ(t))² e^{t²/2} dt / (1/2)
    assert ou_counterexample(1e-6).ratio == pytest.approx(ou_counterexample(1e-5).ratio, rel=1e-4)
    with pytest.raises(ValueError):
        ou_counterexample(0.0)


def test_end_to_end_constant():
    assert end_to_end_constant(3.0) == explicit_constants(3.0).C_end
    with pytest.raises(ValueError):
        end_to_end_constant(-3.0)
