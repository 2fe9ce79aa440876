#!/usr/bin/env python3
"""Unit tests for sample splitting, directions and the component regressions"""

import unittest

import numpy as np
import pytest

from ccf_regression import (BLOCK_LEAVES, BackendSpec, CcfTask, Direction, build_training_rows,
                            canonical_rows, component_rows, draw_directions, fit_ccf, fit_model_set,
                            predict_ccf, split_sample)
from simulators import SimSpec, simulate
from trajectory import Dataset


def _direction(p=1, seed=0):
    rng = np.random.default_rng(seed)
    return Direction(mu=rng.standard_normal(p), nu=rng.standard_normal(p + 1))


class TestSplitSample(unittest.TestCase):

    def test_sizes(self):
        for N, n_eval in [(2, 1), (5, 2), (12, 6)]:
            ds = simulate(SimSpec(model='iid', N=N, T=10, p=1))
            split = split_sample(ds, seed=3)
            self.assertEqual(split.n_eval, n_eval)
            self.assertEqual(len(split.train_ids), N - n_eval)
            self.assertEqual(sorted(split.eval_ids + split.train_ids), list(range(N)))

    def test_deterministic(self):
        ds = simulate(SimSpec(model='iid', N=8, T=10, p=1))
        self.assertEqual(split_sample(ds, 7), split_sample(ds, 7))


class TestDirections(unittest.TestCase):

    def test_shapes(self):
        (direction,) = draw_directions(1, 3, seed=0)
        self.assertEqual(direction.mu.shape, (3,))
        self.assertEqual(direction.nu.shape, (4,))

    def test_deterministic(self):
        self.assertEqual(draw_directions(4, 2, seed=5), draw_directions(4, 2, seed=5))
        self.assertNotEqual(draw_directions(4, 2, seed=5), draw_directions(4, 2, seed=6))

    def test_mean_near_zero(self):
        mus = np.concatenate([d.mu for d in draw_directions(10000, 1, seed=1)])
        self.assertLess(abs(mus.mean()), 0.05)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            draw_directions(0, 3, seed=0)
        with self.assertRaises(ValueError):
            Direction(mu=np.zeros(2), nu=np.zeros(2))


class TestComponentRows(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.chain = rng.standard_normal((2, 10, 2))
        self.direction = _direction()

    def test_g2_row_count(self):
        chain = self.chain[:, :3]
        features, targets = component_rows(chain, CcfTask('g2', 'real', 1, 0, self.direction))
        self.assertEqual(features.shape, (2 * 2, 2))
        self.assertEqual(targets.shape, (4,))

    def test_g1_row_count(self):
        chain = self.chain[:, :6]
        features, _ = component_rows(chain, CcfTask('g1', 'real', 2, 1, self.direction))
        self.assertEqual(features.shape, (2 * 2, 3 * 2))

    def test_g1_first_row(self):
        mu, nu = self.direction.mu, self.direction.nu
        features, targets = component_rows(self.chain, CcfTask('g1', 'imag', 2, 1, self.direction))
        # t = 2: window X_2..X_4, next state S_5, previous X_1
        np.testing.assert_array_equal(features[0], self.chain[0, 1:4].reshape(-1))
        expected = np.sin(self.chain[0, 4, :1] @ mu + self.chain[0, 0] @ nu)
        self.assertAlmostEqual(targets[0], expected, places=14)

    def test_g3_ignores_mu(self):
        mu_free = Direction(mu=np.zeros(1), nu=self.direction.nu)
        _, with_mu = component_rows(self.chain, CcfTask('g3', 'real', 1, 2, self.direction))
        _, without_mu = component_rows(self.chain, CcfTask('g3', 'real', 1, 2, mu_free))
        np.testing.assert_array_equal(with_mu, without_mu)

    def test_g2_first_row(self):
        features, targets = component_rows(self.chain, CcfTask('g2', 'real', 2, 0, self.direction))
        np.testing.assert_array_equal(features[0], self.chain[0, 0:2].reshape(-1))
        self.assertAlmostEqual(targets[0], np.cos(self.chain[0, 2, :1] @ self.direction.mu), places=14)

    def test_targets_bounded(self):
        for which in ('g1', 'g2', 'g3'):
            _, targets = component_rows(self.chain, CcfTask(which, 'real', 2, 1, self.direction))
            self.assertTrue(np.all(np.abs(targets) <= 1.0))

    def test_too_short(self):
        with self.assertRaises(ValueError):
            component_rows(self.chain[:, :4], CcfTask('g1', 'real', 2, 1, self.direction))

    def test_training_rows_use_train_half_only(self):
        ds = simulate(SimSpec(model='model1', N=5, T=20, p=1))
        split = split_sample(ds, seed=0)
        task = CcfTask('g3', 'real', 1, 0, self.direction)
        features, _ = build_training_rows(ds, split, task)
        self.assertEqual(features.shape[0], len(split.train_ids) * (20 - 1 - 1))


class TestFitCcf(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(1)
        self.features = rng.standard_normal((27, 2))
        self.targets = np.cos(self.features[:, 0])

    def test_constant_targets_predict_constant(self):
        for kind in ('forest', 'knn'):
            model = fit_ccf(self.features, np.ones(27), BackendSpec(kind=kind))
            self.assertEqual(predict_ccf(model, np.array([5.0, -3.0])), 1.0)
            zeros = fit_ccf(self.features, np.zeros(27), BackendSpec(kind=kind))
            self.assertEqual(predict_ccf(zeros, self.features[0]), 0.0)

    def test_identical_feature_rows(self):
        features = np.ones((10, 3))
        targets = np.linspace(-1, 1, 10)
        for backend in (BackendSpec(kind='forest', trees=5, min_leaf=1), BackendSpec(kind='knn')):
            value = predict_ccf(fit_ccf(features, targets, backend), np.ones(3))
            self.assertTrue(-1.0 <= value <= 1.0)

    def test_forest_predictions_bounded_and_seeded(self):
        backend = BackendSpec(kind='forest', trees=10, min_leaf=2)
        first = fit_ccf(self.features, self.targets, backend, random_state=4)
        second = fit_ccf(self.features, self.targets, backend, random_state=4)
        query = np.random.default_rng(2).standard_normal((50, 2)) * 3
        a, b = predict_ccf(first, query), predict_ccf(second, query)
        np.testing.assert_array_equal(a, b)
        self.assertTrue(np.all(np.abs(a) <= 1.0))

    def test_knn_default_neighbours(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='knn'))
        self.assertEqual(model.estimator.named_steps['kneighborsregressor'].n_neighbors, 9)

    def test_one_nearest_neighbour_recovers_training_target(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='knn', knn_k=1))
        self.assertAlmostEqual(predict_ccf(model, self.features[3]), self.targets[3], places=12)

    def test_dimension_mismatch(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='knn'))
        with self.assertRaises(ValueError):
            predict_ccf(model, np.zeros(3))

    def test_oracle_is_clipped(self):
        task = CcfTask('g1', 'real', 1, 0, _direction())
        backend = BackendSpec(kind='oracle', oracle=lambda t, x: np.full(x.shape[0], 5.0))
        model = fit_ccf(self.features, self.targets, backend, task=task)
        self.assertEqual(predict_ccf(model, self.features[0]), 1.0)


def test_backend_validation():
    with pytest.raises(ValueError):
        BackendSpec(kind='svm')
    with pytest.raises(ValueError):
        BackendSpec(kind='oracle')
    with pytest.raises(ValueError):
        BackendSpec(trees=0)


class TestForestBlocks(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.features = rng.standard_normal((500, 4))
        self.targets = np.sin(self.features[:, 1]) * 0.5

    def test_trees_grow_on_disjoint_blocks(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='forest', trees=100, min_leaf=5))
        forest = model.estimator
        self.assertEqual(len(forest.estimators_), 500 // (BLOCK_LEAVES * 5))
        rows = np.concatenate(forest.blocks_)
        self.assertEqual(sorted(rows.tolist()), list(range(500)))

    def test_tree_count_capped(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='forest', trees=3, min_leaf=5))
        self.assertEqual(len(model.estimator.estimators_), 3)
        small = fit_ccf(self.features[:20], self.targets[:20], BackendSpec(kind='forest', min_leaf=5))
        self.assertEqual(len(small.estimator.estimators_), 1)

    def test_leaves_respect_min_leaf(self):
        model = fit_ccf(self.features, self.targets, BackendSpec(kind='forest', trees=100, min_leaf=5))
        # block indices refer to the sorted rows the trees were fit on
        fitted_rows, _ = canonical_rows(self.features, self.targets)
        for tree, rows in zip(model.estimator.estimators_, model.estimator.blocks_):
            leaf_sizes = np.bincount(tree.apply(fitted_rows[rows]))
            self.assertGreaterEqual(leaf_sizes[leaf_sizes > 0].min(), 5)


class TestRowOrder(unittest.TestCase):

    def test_canonical_rows_sorted(self):
        features = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 1.0], [0.0, 1.0]])
        targets = np.array([0.1, 0.2, 0.4, 0.3])
        sorted_features, sorted_targets = canonical_rows(features, targets)
        np.testing.assert_array_equal(sorted_features, [[0.0, 1.0], [0.0, 1.0], [0.0, 2.0], [1.0, 0.0]])
        np.testing.assert_array_equal(sorted_targets, [0.3, 0.4, 0.2, 0.1])

    def test_shuffled_rows_fit_identical_models(self):
        rng = np.random.default_rng(8)
        features = rng.standard_normal((300, 3))
        targets = np.cos(features[:, 0] + features[:, 2])
        perm = rng.permutation(300)
        query = rng.standard_normal((40, 3))
        for backend in (BackendSpec(kind='forest', trees=20, min_leaf=3), BackendSpec(kind='knn')):
            first = fit_ccf(features, targets, backend, random_state=5)
            second = fit_ccf(features[perm], targets[perm], backend, random_state=5)
            np.testing.assert_array_equal(predict_ccf(first, query), predict_ccf(second, query))


class TestEvaluationHalfIgnored(unittest.TestCase):

    def test_permuting_evaluation_trajectories_keeps_models(self):
        ds = simulate(SimSpec(model='model1', N=6, T=40, p=2, seed=4))
        split = split_sample(ds, seed=2)
        trajs = list(ds.trajectories)
        first, *rest = split.eval_ids
        # rotate the evaluation trajectories through their slots
        for slot, source in zip(split.eval_ids, tuple(rest) + (first,)):
            trajs[slot] = ds.trajectories[source]
        permuted = Dataset(tuple(trajs))
        self.assertNotEqual(permuted, ds)

        (direction,) = draw_directions(1, 2, seed=1)
        seeds = {name: i for i, name in enumerate(
            ('g1_real', 'g1_imag', 'g2_real', 'g2_imag', 'g3_real', 'g3_imag'))}
        query = np.random.default_rng(0).standard_normal((25, 3 * 3))
        for backend in (BackendSpec(kind='forest', trees=10), BackendSpec(kind='knn')):
            a = fit_model_set(ds, split, 1, 2, direction, backend, seeds)
            b = fit_model_set(permuted, split, 1, 2, direction, backend, seeds)
            for name in ('g1_real', 'g1_imag', 'g3_real', 'g3_imag'):
                np.testing.assert_array_equal(predict_ccf(getattr(a, name), query),
                                              predict_ccf(getattr(b, name), query))
            for name in ('g2_real', 'g2_imag'):
                np.testing.assert_array_equal(predict_ccf(getattr(a, name), query[:, :3]),
                                              predict_ccf(getattr(b, name), query[:, :3]))
