#!/usr/bin/env python3
"""Unit tests for the HTTP routes.

Routes are registered on a bare Flask app with a dummy limiter whose
decorators are no-ops, so tests don't require flask-limiter.
"""

import pytest
from flask import Flask
from unittest.mock import patch

import routes as routes_mod
from experiment import StageError
from simulators import SimSpec, simulate
from trajectory import dataset_to_records


def _build_test_app():
    app = Flask(__name__)

    class DummyLimiter:
        def limit(self, _limit_str):
            def decorator(fn):
                return fn
            return decorator

        def exempt(self, fn):
            return fn

    routes_mod.register_routes(app, DummyLimiter())
    return app


TEST_APP = _build_test_app()
SMALL_CONFIG = {'K': 2, 'Q': 1, 'B': 1, 'trees': 5, 'seed': 3}


def _post(path, payload):
    return TEST_APP.test_client().post(path, json=payload, headers={"Content-Type": "application/json"})


def _records():
    return dataset_to_records(simulate(SimSpec(model='model1', N=4, T=30, p=2, seed=1)))


def test_health():
    resp = TEST_APP.test_client().get('/health')
    assert resp.status_code == 200
    assert resp.get_json()['status'] == 'healthy'


def test_simulate_returns_records():
    resp = _post('/api/simulate', {'spec': {'model': 'model2', 'n': 2, 't': 5, 'p': 2, 'seed': 4}})
    assert resp.status_code == 200
    data = resp.get_json()
    assert data['success'] is True
    assert len(data['records']) == 10
    assert data['records'][0]['traj'] == 1
    assert len(data['records'][0]['state']) == 2


@pytest.mark.parametrize(
    "spec",
    [
        {'model': 'model9', 'n': 2, 't': 5},
        {'model': 'model1', 'n': 'two', 't': 5},
        {'model': 'model1', 't': 5},
        {'model': 'model1', 'n': 2, 't': 5, 'colour': 'red'},
        None,
    ],
)
def test_simulate_rejects_bad_spec(spec):
    resp = _post('/api/simulate', {'spec': spec})
    assert resp.status_code == 400
    assert resp.get_json()['success'] is False


def test_estimate_small_dataset():
    resp = _post('/api/estimate', {'records': _records(), 'config': SMALL_CONFIG})
    assert resp.status_code == 200
    data = resp.get_json()
    assert data['success'] is True
    assert data['pi'][0] == 1.0
    assert len(data['omega']) == 2


def test_estimate_is_deterministic():
    payload = {'records': _records(), 'config': SMALL_CONFIG}
    assert _post('/api/estimate', payload).get_json() == _post('/api/estimate', payload).get_json()


def test_estimate_rejects_invalid_config():
    resp = _post('/api/estimate', {'records': _records(), 'config': {'K': 6, 'Q': 30}})
    assert resp.status_code == 400
    assert 'Q + K' in resp.get_json()['error']


def test_estimate_rejects_missing_records():
    resp = _post('/api/estimate', {'config': SMALL_CONFIG})
    assert resp.status_code == 400


def test_estimate_runtime_failure_is_500():
    with patch('routes.run_estimate', side_effect=StageError('fit', RuntimeError('worker died'))):
        resp = _post('/api/estimate', {'records': _records(), 'config': SMALL_CONFIG})
    assert resp.status_code == 500
    assert 'fit stage failed' in resp.get_json()['error']


def test_signal_rethresholds_pi():
    resp = _post('/api/signal', {'pi': [1.0, 0.4, 0.0, 0.0, 0.0], 'n_eval': 3, 't': 450})
    assert resp.status_code == 200
    data = resp.get_json()
    assert data['k_hat'] == 2
    assert data['omega'][2:] == [1.0, 1.0]


@pytest.mark.parametrize(
    "payload",
    [
        {'pi': [1.0], 'n_eval': 3, 't': 450},
        {'pi': 'nope', 'n_eval': 3, 't': 450},
        {'pi': [1.0, 0.5], 't': 450},
        {'pi': [1.0, 0.5], 'n_eval': 3, 't': 450, 'tau': 1.5},
        {'pi': [1.0, 0.5], 'n_eval': 3, 't': 450, 'ridge_mode': 'full'},
        {'pi': [1.0, 0.5], 'n_eval': 3, 't': 450, 'lambda': 2},
    ],
)
def test_signal_rejects_bad_input(payload):
    resp = _post('/api/signal', payload)
    assert resp.status_code == 400
    assert resp.get_json()['success'] is False


def test_non_json_body():
    resp = TEST_APP.test_client().post('/api/signal', data='pi=1', content_type='text/plain')
    assert resp.status_code == 400


def test_unknown_route_is_json_404():
    resp = TEST_APP.test_client().get('/api/nothing')
    assert resp.status_code == 404
    assert resp.get_json() == {'success': False, 'error': 'Not found'}


@pytest.mark.parametrize('config', [{'B': 2.5}, {'K': 1.5}, {'threads': 2.5}, {'seed': True}])
def test_estimate_rejects_fractional_integers(config):
    resp = _post('/api/estimate', {'records': _records(), 'config': config})
    assert resp.status_code == 400
    assert 'must be an integer' in resp.get_json()['error']
