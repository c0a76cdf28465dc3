"""
Tests for the model catalogue: construction, moments and the curvature-dimension margin.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdlab_models import (carre_du_champ, cd_margin, generator_apply, identity_moments, make_model,
                          reference_gap)

FINITE_GRID = np.linspace(-0.99, 0.99, 401)
LINE_GRID = np.linspace(-50.0, 50.0, 1001)


@pytest.mark.parametrize('N', [2.0, 3.0, 5.0, 7.5])
def test_jacobi_is_an_equality_case(N):
    model = make_model('jacobi', N=N)
    report = cd_margin(model, N - 1.0, N, FINITE_GRID)
    assert abs(report.min_margin) <= 1e-10
    assert np.max(np.abs(report.margin)) <= 1e-10
    assert report.certifies(1e-10)


@pytest.mark.parametrize('N', [-1.5, -3.0, -6.0])
def test_cauchy_is_an_equality_case(N):
    model = make_model('cauchy', N=N)
    report = cd_margin(model, 1.0 - N, N, LINE_GRID)
    assert np.max(np.abs(report.margin)) <= 1e-10


def test_gaussian_margin_at_infinite_dimension():
    model = make_model('gaussian', kappa=2.0)
    assert np.max(np.abs(cd_margin(model, 2.0, math.inf, LINE_GRID).margin)) <= 1e-12
    assert cd_margin(model, 1.0, math.inf, LINE_GRID).min_margin == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(N=st.floats(min_value=1.5, max_value=10.0), extra=st.floats(min_value=0.0, max_value=10.0))
def test_larger_dimension_keeps_the_condition(N, extra):
    model = make_model('jacobi', N=N)
    assert cd_margin(model, N - 1.0, N + extra, FINITE_GRID).min_margin >= -1e-9


def test_sin_perturbation_breaks_the_condition():
    base = make_model('jacobi', N=3.0)
    model = make_model('phi_perturbed', base=base, delta=0.3, psi='sin')
    report = cd_margin(model, 2.0, 3.0, FINITE_GRID)
    assert report.min_margin < 0
    assert not report.certifies(1e-9)


def test_jacobi_moments():
    report = identity_moments(make_model('jacobi', N=3.0))
    assert abs(report.mean) <= 1e-12
    assert report.variance == pytest.approx(0.25, rel=1e-8)
    assert report.gamma_mass == pytest.approx(0.75, rel=1e-8)


def test_cauchy_moments():
    report = identity_moments(make_model('cauchy', N=-3.0))
    assert report.variance == pytest.approx(0.5, rel=1e-8)
    assert report.gamma_mass == pytest.approx(1.5, rel=1e-8)


def test_gaussian_moments():
    report = identity_moments(make_model('gaussian', kappa=2.0))
    assert report.variance == pytest.approx(0.5, rel=1e-8)
    assert report.norm_const == pytest.approx(math.sqrt(math.pi), rel=1e-8)


def test_heavy_tail_moments_rejected():
    with pytest.raises(ValueError):
        identity_moments(make_model('cauchy', N=-1.5))


def test_identity_is_an_eigenfunction_of_jacobi():
    model = make_model('jacobi', N=4.0)
    x = np.linspace(-0.9, 0.9, 19)
    lf = generator_apply(model, x, x, df=np.ones_like(x), d2f=np.zeros_like(x))
    np.testing.assert_allclose(lf, -4.0 * x, atol=1e-12)
    np.testing.assert_allclose(carre_du_champ(model, x, x, df=np.ones_like(x)), 1.0 - x * x, atol=1e-15)


def test_scaled_model():
    base = make_model('jacobi', N=3.0)
    assert make_model('scaled', base=base, r=1.0).gap == pytest.approx(3.0)
    half = make_model('scaled', base=base, r=0.5)
    assert half.interval == (-0.5, 0.5)
    assert half.gap == pytest.approx(12.0)
    assert half.curvature == pytest.approx(8.0)
    report = cd_margin(half, half.curvature, 3.0, FINITE_GRID * 0.5)
    assert np.max(np.abs(report.margin)) <= 1e-8


def test_reference_gap():
    assert reference_gap(3.0) == 3.0
    assert reference_gap(math.inf) == 1.0
    assert reference_gap(-4.0) == 4.0
    with pytest.raises(ValueError):
        reference_gap(0.5)


@pytest.mark.parametrize('kind, params', [
    ('jacobi', {'N': 1.0}),
    ('jacobi', {'N': math.inf}),
    ('cauchy', {'N': -0.5}),
    ('gaussian', {'kappa': 0.5}),
    ('gauss_quartic', {'delta': -0.1}),
    ('unknown', {}),
])
def test_make_model_rejects_bad_parameters(kind, params):
    with pytest.raises(ValueError):
        make_model(kind, params)


def test_make_model_rejects_bad_perturbations():
    base = make_model('jacobi', N=3.0)
    with pytest.raises(ValueError):
        make_model('phi_perturbed', base=base, delta=1.0, psi='sin')
    with pytest.raises(ValueError):
        make_model('phi_perturbed', base=base, delta=0.1, psi='sin', scale=0.0)
    with pytest.raises(ValueError):
        make_model('scaled', base=base, r=1.5)
    with pytest.raises(ValueError):
        make_model('scaled', base=make_model('gaussian'), r=0.5)
