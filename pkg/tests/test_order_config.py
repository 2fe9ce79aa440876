#!/usr/bin/env python3
"""Unit tests for estimator configuration"""

import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import yaml

from ccf_regression import BackendSpec
from order_config import (THREADS_ENV, EstimatorConfig, default_directions, load_config_file,
                          resolve_threads, validate_config)


class TestValidateConfig(unittest.TestCase):
    """Test cases for validate_config"""

    def test_defaults_valid(self):
        result = validate_config(EstimatorConfig(), T=450)
        self.assertTrue(result['valid'])
        self.assertEqual(len(result['errors']), 0)

    def test_q_plus_k_exceeds_length(self):
        result = validate_config(EstimatorConfig(K=6, Q=5), T=12)
        self.assertFalse(result['valid'])
        self.assertIn('Q + K must not exceed T - 2', str(result['errors']))

    def test_bad_tau_and_eta(self):
        result = validate_config(EstimatorConfig(tau=1.5, eta=0.5))
        self.assertFalse(result['valid'])
        self.assertEqual(len(result['errors']), 2)

    def test_large_eta_warns(self):
        result = validate_config(EstimatorConfig(eta=8.0))
        self.assertTrue(result['valid'])
        self.assertIn('eta=8.0', str(result['warnings']))

    def test_many_directions_warn(self):
        result = validate_config(EstimatorConfig(B=40), T=450, N=6)
        self.assertTrue(result['valid'])
        self.assertIn('B=40', str(result['warnings']))
        self.assertEqual(validate_config(EstimatorConfig(B=7), T=450, N=6)['warnings'], [])

    def test_unknown_ridge_mode(self):
        result = validate_config(EstimatorConfig(ridge_mode='full'))
        self.assertFalse(result['valid'])

    def test_check_raises_joined_errors(self):
        with self.assertRaises(ValueError) as ctx:
            EstimatorConfig(K=0, B=0).check()
        self.assertIn('K must be at least 1', str(ctx.exception))
        self.assertIn('B must be at least 1', str(ctx.exception))


class TestEstimatorConfig(unittest.TestCase):

    def test_default_directions(self):
        self.assertEqual(default_directions(6, 450), 7)
        self.assertEqual(default_directions(18, 450), 9)
        self.assertEqual(default_directions(1, 1), 1)

    def test_resolve_fills_b_only_when_missing(self):
        self.assertEqual(EstimatorConfig().resolve(6, 450).B, 7)
        self.assertEqual(EstimatorConfig(B=3).resolve(6, 450).B, 3)

    def test_from_mapping_overlays(self):
        base = EstimatorConfig(K=4)
        config = EstimatorConfig.from_mapping({'tau': 0.4, 'backend': 'knn', 'knn_k': 7}, base)
        self.assertEqual(config.K, 4)
        self.assertEqual(config.tau, 0.4)
        self.assertEqual(config.backend, BackendSpec(kind='knn', knn_k=7))

    def test_from_mapping_rejects_unknown_keys(self):
        with self.assertRaises(ValueError):
            EstimatorConfig.from_mapping({'depth': 3})

    def test_from_mapping_rejects_bad_values(self):
        with self.assertRaises(ValueError):
            EstimatorConfig.from_mapping({'K': 'six'})

    def test_from_mapping_rejects_fractional_integers(self):
        for key in ('K', 'Q', 'B', 'seed', 'threads', 'trees', 'min_leaf', 'knn_k'):
            with self.assertRaises(ValueError) as ctx:
                EstimatorConfig.from_mapping({key: 2.5})
            self.assertIn(f"{key} must be an integer", str(ctx.exception))
        with self.assertRaises(ValueError):
            EstimatorConfig.from_mapping({'B': True})

    def test_from_mapping_accepts_whole_floats(self):
        config = EstimatorConfig.from_mapping({'B': 4.0, 'trees': 20.0})
        self.assertEqual((config.B, config.backend.trees), (4, 20))
        self.assertIsInstance(config.B, int)

    def test_ridge_property(self):
        ridge = EstimatorConfig(c0=0.2, a=2.0).ridge
        self.assertEqual((ridge.c0, ridge.a), (0.2, 2.0))


class TestThreads(unittest.TestCase):

    def test_environment_wins(self):
        with patch.dict(os.environ, {THREADS_ENV: '3'}):
            self.assertEqual(resolve_threads(8), 3)

    def test_requested_without_environment(self):
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_threads(2), 2)
            self.assertGreaterEqual(resolve_threads(None), 1)

    def test_invalid_environment(self):
        with patch.dict(os.environ, {THREADS_ENV: 'many'}):
            with self.assertRaises(ValueError):
                resolve_threads(1)


class TestConfigFile(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_load_yaml(self):
        path = os.path.join(self.temp_dir, 'params.yaml')
        with open(path, 'w') as f:
            yaml.safe_dump({'K': 4, 'Q': 2, 'backend': 'forest', 'trees': 50}, f)
        config = EstimatorConfig.from_mapping(load_config_file(path))
        self.assertEqual((config.K, config.Q, config.backend.trees), (4, 2, 50))

    def test_non_mapping_file(self):
        path = os.path.join(self.temp_dir, 'params.yaml')
        with open(path, 'w') as f:
            f.write('- 1\n- 2\n')
        with self.assertRaises(ValueError):
            load_config_file(path)
