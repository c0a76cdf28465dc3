"""
Tests for the REST API.
"""

import pytest
from fastapi.testclient import TestClient

from app import app


@pytest.fixture(scope='module')
def client():
    return TestClient(app)


def test_ping(client):
    response = client.get('/ping')
    assert response.status_code == 200
    assert response.json()['status'] == 'pong'


def test_constants(client):
    response = client.get('/audit/api/constants', params={'N': 3})
    assert response.status_code == 200
    body = response.json()
    assert body['thm_beta_const'] == 8.0
    assert body['Z_minus'] is None


def test_gap(client):
    response = client.get('/audit/api/gap', params={'model': 'jacobi', 'N': 3, 'n': 500})
    assert response.status_code == 200
    body = response.json()
    assert body['lambda1'] == pytest.approx(3.0, abs=1e-3)
    assert 'f' not in body


@pytest.mark.parametrize('path, params', [
    ('/audit/api/gap', {'model': 'jacobi', 'N': 0.5}),
    ('/audit/api/gap', {'model': 'torus'}),
    ('/audit/api/counterexample', {'r': -1}),
    ('/audit/api/constants', {}),
])
def test_invalid_parameters(client, path, params):
    assert client.get(path, params=params).status_code == 422


def test_cd_check(client):
    body = client.get('/audit/api/cd-check', params={'model': 'cauchy', 'N': -3}).json()
    assert body['certified'] is True
    assert body['rho'] == pytest.approx(4.0)


def test_counterexample(client):
    body = client.get('/audit/api/counterexample', params={'r': 4}).json()
    assert body['r'] == 4.0
    assert body['ratio'] > 0


def test_stability(client):
    config = {'command': 'stability', 'family': 'gauss_stiff', 'deltas': [0.01, 0.1], 'n': 200}
    response = client.post('/experiment/api/stability', json=config)
    assert response.status_code == 200
    body = response.json()
    assert [row['delta'] for row in body['table']['rows']] == [0.01, 0.1]
    assert body['table']['dim'] == 'inf'
    assert body['fit'] is None


def test_stability_requires_a_known_family(client):
    assert client.post('/experiment/api/stability', json={'command': 'stability'}).status_code == 422
    response = client.post('/experiment/api/stability', json={'command': 'stability', 'family': 'beta_rotated'})
    assert response.status_code == 422


def test_resolution(client):
    config = {'command': 'resolution', 'family': 'gauss_stiff', 'deltas': [0.1], 'n': 100}
    body = client.post('/experiment/api/resolution', json=config).json()
    assert body['n'] == 100
    assert len(body['rows']) == 1
