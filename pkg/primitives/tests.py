import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from primitives.boxcox import BoxCoxProfile, boxcox_profile, boxcox_transform
from primitives.exceptions import (DimensionMismatch, InputError, NoBracket, NonpositiveP,
                                   NoVariation, RankDeficient, Separation, SingleCluster)
from primitives.forest import ForestParams, forest_fit, forest_predict
from primitives.linear import DesignMatrix, demean_by_group, independent_columns, linear_contrast, ols_fit
from primitives.logit import logit_fit
from primitives.loess import loess_fit
from primitives.optimize import bisect_root, golden_section_maximize
from primitives.parallel import ordered_map, substream


def setup_test_data(cls):
    # random regression draw shared by the OLS tests
    rng = substream(20240101, 0)
    cls.n = 200
    cls.X = np.column_stack([np.ones(cls.n), rng.normal(size=(cls.n, 3))])
    cls.beta = np.array([1.0, -2.0, 0.5, 3.0])
    cls.y = cls.X @ cls.beta + rng.normal(size=cls.n)
    cls.design = DesignMatrix(cls.X, ('const', 'x1', 'x2', 'x3'))


class SearchTest(SimpleTestCase):
    """
    TestCase for the one-dimensional search helpers
    """

    def test_golden_section_finds_interior_maximum(self):
        """
        Maximizer of -(x-1.3)^2 on [0, 5] is 1.3
        """
        x = golden_section_maximize(lambda x: -(x - 1.3) ** 2, 0.0, 5.0)
        self.assertAlmostEqual(x, 1.3, places=6)

    def test_golden_section_boundary(self):
        """
        A monotone objective has no interior maximum: NoBracket unless the boundary is allowed
        """
        with self.assertRaises(NoBracket):
            golden_section_maximize(lambda x: x, 0.0, 1.0)
        self.assertEquals(golden_section_maximize(lambda x: x, 0.0, 1.0, allow_boundary=True), 1.0)

    def test_bisect_root(self):
        """
        Bisection recovers sqrt(2) and refuses an interval without sign change
        """
        self.assertAlmostEqual(bisect_root(lambda x: x * x - 2, 0.0, 2.0), math.sqrt(2), places=9)
        with self.assertRaises(NoBracket):
            bisect_root(lambda x: x * x + 1, 0.0, 2.0)


class ParallelTest(SimpleTestCase):
    """
    TestCase for thread pool and random substreams
    """

    def test_ordered_map_keeps_order(self):
        """
        Results come back in input order for any thread count
        """
        self.assertEquals(ordered_map(lambda x: x * x, range(20), threads=4), [x * x for x in range(20)])

    def test_substreams_are_reproducible_and_distinct(self):
        """
        Same key gives the same draws; different keys give different draws
        """
        a = substream(7, 1, 2).normal(size=5)
        b = substream(7, 1, 2).normal(size=5)
        c = substream(7, 2, 1).normal(size=5)
        self.assertTrue(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))


class OlsTest(SimpleTestCase):
    """
    TestCase for ols_fit and linear_contrast
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_perfect_fit(self):
        """
        y = 2x without intercept gives beta 2 and SE 0
        """
        x = np.arange(1.0, 11.0)
        result = ols_fit(DesignMatrix(x, ('x',)), 2 * x, cluster_robust=False)
        self.assertAlmostEqual(result.get('x'), 2.0, places=12)
        self.assertAlmostEqual(result.standard_error('x'), 0.0, places=10)

    def test_matches_pseudo_inverse(self):
        """
        Coefficients match an independent pseudo-inverse computation to 1e-10
        """
        result = ols_fit(self.design, self.y)
        oracle = np.linalg.pinv(self.X) @ self.y
        self.assertTrue(np.allclose(result.coef, oracle, rtol=0, atol=1e-10))

    def test_residuals_orthogonal_to_regressors(self):
        """
        X'e vanishes up to rounding
        """
        result = ols_fit(self.design, self.y)
        scale = np.abs(self.X).max() * np.abs(self.y).max() * self.n
        self.assertLess(np.abs(self.X.T @ result.residuals).max(), 1e-8 * scale)

    def test_singleton_clusters_equal_hc1(self):
        """
        One observation per cluster reproduces the HC1 sandwich entrywise
        """
        clustered = ols_fit(DesignMatrix(self.X, self.design.columns, np.arange(self.n)), self.y)
        hc1 = ols_fit(self.design, self.y)
        bread = np.linalg.inv(self.X.T @ self.X)
        meat = (self.X * hc1.residuals[:, None] ** 2).T @ self.X
        manual = self.n / (self.n - 4) * bread @ meat @ bread
        self.assertEquals(hc1.cov_type, 'hc1')
        self.assertTrue(np.allclose(clustered.cov, hc1.cov, rtol=0, atol=1e-12))
        self.assertTrue(np.allclose(hc1.cov, manual, rtol=1e-9, atol=1e-14))

    def test_cluster_small_sample_factor(self):
        """
        Cluster covariance uses G/(G-1) * (n-1)/(n-k)
        """
        clusters = np.repeat(np.arange(40), 5)
        result = ols_fit(DesignMatrix(self.X, self.design.columns, clusters), self.y)
        bread = np.linalg.inv(self.X.T @ self.X)
        scores = np.zeros((40, 4))
        np.add.at(scores, clusters, self.X * result.residuals[:, None])
        manual = 40 / 39 * (self.n - 1) / (self.n - 4) * bread @ scores.T @ scores @ bread
        self.assertTrue(np.allclose(result.cov, manual, rtol=1e-9))
        self.assertEquals(result.n_clusters, 40)

    def test_rank_deficient_reports_columns(self):
        """
        A duplicated column is reported by name, earlier column kept
        """
        X = np.column_stack([self.X, self.X[:, 1]])
        with self.assertRaises(RankDeficient) as caught:
            ols_fit(DesignMatrix(X, self.design.columns + ('x1_copy',)), self.y)
        self.assertEquals(caught.exception.dropped_columns, ('x1_copy',))

    def test_single_cluster(self):
        """
        Robust covariance is undefined with one cluster
        """
        with self.assertRaises(SingleCluster):
            ols_fit(DesignMatrix(self.X, self.design.columns, np.zeros(self.n)), self.y)

    def test_exact_fit_has_nan_covariance(self):
        """
        n == k gives coefficients but no residual degrees of freedom
        """
        X = np.eye(3)
        result = ols_fit(DesignMatrix(X, ('a', 'b', 'c'), np.arange(3)), np.array([1.0, 2.0, 3.0]))
        self.assertTrue(np.allclose(result.coef, [1, 2, 3]))
        self.assertIn('no_residual_dof', result.flags)
        self.assertTrue(np.all(np.isnan(result.cov)))

    def test_contrast_unit_vector(self):
        """
        w = e_j reproduces coefficient j and its SE
        """
        result = ols_fit(self.design, self.y)
        contrast = linear_contrast(result, [0, 0, 1, 0])
        self.assertAlmostEqual(contrast.estimate, result.get('x2'), places=12)
        self.assertAlmostEqual(contrast.se, result.standard_error('x2'), places=12)

    def test_contrast_of_equal_groups_is_zero(self):
        """
        Partition dummies with the same group mean give a zero contrast
        """
        groups = np.repeat([0, 1, 2], 10)
        X = (groups[:, None] == np.arange(3)).astype(float)
        result = ols_fit(DesignMatrix(X, ('g1', 'g2', 'g3')), np.ones(30))
        self.assertAlmostEqual(result.contrast({'g3': 1, 'g2': -1}).estimate, 0.0, places=12)

    def test_contrast_dimension_mismatch(self):
        """
        Weights of the wrong length are rejected
        """
        result = ols_fit(self.design, self.y)
        with self.assertRaises(DimensionMismatch):
            linear_contrast(result, [1, -1])

    def test_contrast_se_matches_bootstrap(self):
        """
        Robust contrast SE agrees with a pairs bootstrap within 10%
        """
        rng = substream(99, 0)
        n = 1000
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        y = X @ [0.0, 1.0, 1.5] + rng.normal(size=n) * (1 + np.abs(X[:, 1]))
        design = DesignMatrix(X, ('const', 'a', 'b'))
        weights = [0, -1, 1]
        analytic = linear_contrast(ols_fit(design, y), weights).se
        draws = []
        for _ in range(500):
            rows = rng.integers(0, n, size=n)
            draws.append(np.asarray(weights) @ np.linalg.lstsq(X[rows], y[rows], rcond=None)[0])
        self.assertLess(abs(np.std(draws, ddof=1) / analytic - 1), 0.10)

    def test_independent_columns_keeps_first(self):
        """
        Aliased dummies are dropped in column order
        """
        a = np.array([1.0, 1, 0, 0])
        b = 1 - a
        ones = np.ones(4)
        self.assertEquals(list(independent_columns(np.column_stack([ones, a, b]))), [True, True, False])

    def test_demean_by_group(self):
        """
        Within transformation removes group means
        """
        out = demean_by_group(np.array([1.0, 3.0, 10.0, 20.0]), ['a', 'a', 'b', 'b'])
        self.assertTrue(np.allclose(out, [-1, 1, -5, 5]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_covariance_is_symmetric_psd(self, seed):
        """
        Every covariance returned is symmetric positive semidefinite
        """
        rng = substream(seed, 0)
        X = np.column_stack([np.ones(60), rng.normal(size=(60, 2))])
        y = rng.normal(size=60)
        result = ols_fit(DesignMatrix(X, ('c', 'a', 'b'), rng.integers(0, 12, size=60)), y)
        self.assertTrue(np.allclose(result.cov, result.cov.T, atol=1e-10))
        self.assertGreater(np.linalg.eigvalsh(result.cov).min(), -1e-10)


class LogitTest(SimpleTestCase):
    """
    TestCase for logit_fit
    """

    def test_intercept_only_half(self):
        """
        mean(y) = 0.5 gives intercept 0
        """
        result = logit_fit(DesignMatrix(np.ones(10), ('const',)), [0, 1] * 5)
        self.assertAlmostEqual(result.get('const'), 0.0, places=10)

    def test_intercept_only_three_quarters(self):
        """
        mean(y) = 0.75 gives intercept ln 3
        """
        result = logit_fit(DesignMatrix(np.ones(8), ('const',)), [1, 1, 1, 0, 1, 1, 1, 0])
        self.assertAlmostEqual(result.get('const'), math.log(3), places=8)
        self.assertAlmostEqual(result.extra['pseudo_r2'], 0.0, places=10)

    def test_recovers_indicator_coefficient(self):
        """
        H-indicator DGP with coefficient -1.0, n = 10^4: estimate within 3 SE; gradient below 1e-8
        """
        rng = substream(314, 0)
        n = 10000
        h = (rng.uniform(size=n) < 0.4).astype(float)
        speed = rng.normal(size=n)
        latent = 0.3 - 1.0 * h + 0.5 * speed
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-latent))).astype(float)
        X = np.column_stack([np.ones(n), h, speed])
        result = logit_fit(DesignMatrix(X, ('const', 'h', 'speed')), y)
        self.assertLess(abs(result.get('h') + 1.0), 3 * result.standard_error('h'))
        self.assertLess(result.extra['gradient_norm'], 1e-8)
        self.assertGreater(np.linalg.eigvalsh(np.linalg.inv(result.cov)).min(), 0)

    def test_no_variation(self):
        """
        A single outcome class is rejected
        """
        with self.assertRaises(NoVariation):
            logit_fit(DesignMatrix(np.ones(5), ('const',)), np.zeros(5))

    def test_separation(self):
        """
        A perfectly separating regressor is reported, not regularized
        """
        x = np.arange(-5.0, 5.0)
        y = (x > 0).astype(float)
        with self.assertRaises(Separation):
            logit_fit(DesignMatrix(np.column_stack([np.ones(10), x]), ('const', 'x')), y)


class LoessTest(SimpleTestCase):
    """
    TestCase for loess_fit
    """

    def test_constant_response(self):
        """
        Constant y gives a constant curve
        """
        x = np.linspace(0, 1, 50)
        fit, _ = loess_fit(x, np.full(50, 4.2)).predict(np.linspace(0, 1, 11))
        self.assertTrue(np.allclose(fit, 4.2, atol=1e-10))

    def test_reproduces_lines(self):
        """
        Local linear fits reproduce y = 3x on the interior
        """
        x = np.linspace(0, 1, 60)
        fit, _ = loess_fit(x, 3 * x).predict(np.linspace(0.1, 0.9, 9))
        self.assertTrue(np.allclose(fit, 3 * np.linspace(0.1, 0.9, 9), atol=1e-6))

    def test_full_span_equals_ols_line(self):
        """
        span = 1 on linear data equals the global OLS line
        """
        rng = substream(5, 0)
        x = np.sort(rng.uniform(size=40))
        y = 1.5 - 2.0 * x
        grid = np.linspace(x.min(), x.max(), 7)
        fit, _ = loess_fit(x, y, span=1.0).predict(grid)
        line = ols_fit(DesignMatrix(x, ('x',)), y, intercept=True)
        self.assertTrue(np.allclose(fit, line.get('const') + line.get('x') * grid, atol=1e-8))

    def test_finds_known_maximum(self):
        """
        y = -(x-0.4)^2 + noise: the fitted curve peaks within 0.05 of 0.4
        """
        rng = substream(11, 0)
        x = rng.uniform(size=500)
        y = -(x - 0.4) ** 2 + rng.normal(scale=0.05, size=500)
        grid = np.linspace(0, 1, 201)
        fit, se = loess_fit(x, y).predict(grid)
        self.assertLess(abs(grid[np.argmax(fit)] - 0.4), 0.05)
        self.assertTrue(np.all(se > 0))

    def test_too_few_points(self):
        """
        Fewer than 10 points is an input error
        """
        with self.assertRaises(InputError):
            loess_fit(np.arange(5.0), np.arange(5.0))


class ForestTest(SimpleTestCase):
    """
    TestCase for forest_fit and forest_predict
    """

    def test_constant_target(self):
        """
        Zero-variance target gives exactly that constant, flagged
        """
        X = np.arange(40.0).reshape(-1, 2)
        model = forest_fit(X, np.full(20, 7.0), ForestParams(n_trees=5))
        self.assertIn('degenerate_target', model.flags)
        self.assertTrue(np.all(forest_predict(model, X) == 7.0))

    def test_beats_mean_predictor(self):
        """
        y = x1 on [0,1]: test MSE below a quarter of the mean-predictor MSE
        """
        rng = substream(21, 0)
        X = rng.uniform(size=(2000, 2))
        y = X[:, 0]
        model = forest_fit(X, y, ForestParams(n_trees=100), seed=3)
        test = rng.uniform(size=(500, 2))
        mse = np.mean((forest_predict(model, test) - test[:, 0]) ** 2)
        baseline = np.mean((y.mean() - test[:, 0]) ** 2)
        self.assertLess(mse, 0.25 * baseline)

    def test_deterministic_across_threads(self):
        """
        Same seed gives identical predictions for 1 and 4 threads
        """
        rng = substream(8, 0)
        X = rng.normal(size=(300, 3))
        y = X[:, 0] + rng.normal(size=300)
        one = forest_predict(forest_fit(X, y, ForestParams(n_trees=12), seed=5, threads=1), X, threads=1)
        four = forest_predict(forest_fit(X, y, ForestParams(n_trees=12), seed=5, threads=4), X, threads=4)
        self.assertTrue(np.array_equal(one, four))

    def test_leaves_respect_min_leaf(self):
        """
        Every leaf holds at least min_leaf bootstrap rows
        """
        rng = substream(9, 0)
        X = rng.normal(size=(200, 2))
        model = forest_fit(X, X[:, 1] ** 2, ForestParams(n_trees=4, min_leaf=7), seed=1)
        for tree in model.trees:
            self.assertGreaterEqual(tree.n_samples[tree.feature < 0].min(), 7)

    def test_tree_order_invariance(self):
        """
        Reversing the tree order leaves predictions unchanged
        """
        rng = substream(10, 0)
        X = rng.normal(size=(150, 2))
        model = forest_fit(X, X[:, 0], ForestParams(n_trees=8), seed=2)
        forward = forest_predict(model, X)
        model.trees.reverse()
        self.assertTrue(np.allclose(forward, forest_predict(model, X), rtol=0, atol=1e-12))

    def test_too_few_rows(self):
        """
        n < 2 * min_leaf is rejected
        """
        with self.assertRaises(InputError):
            forest_fit(np.arange(6.0), np.arange(6.0), ForestParams(min_leaf=5))


class BoxCoxTest(SimpleTestCase):
    """
    TestCase for boxcox_profile
    """

    def test_log_log_dgp(self):
        """
        ln P = 2 + 0.5 ln S + noise: lambda near 0 and linearity rejected
        """
        rng = substream(41, 0)
        log_speed = rng.uniform(0, 8, size=1000)
        price = np.exp(2 + 0.5 * log_speed + rng.normal(scale=0.1, size=1000))
        result = boxcox_profile(price, np.exp(log_speed))
        self.assertTrue(-0.1 <= result.lambda_hat <= 0.1)
        self.assertLess(result.p_linear, 0.001)

    def test_lin_log_dgp(self):
        """
        P = 2 + 0.5 ln S + noise: lambda near 1 and the log model rejected
        """
        rng = substream(42, 0)
        log_speed = rng.uniform(0, 16, size=1000)
        price = 2 + 0.5 * log_speed + rng.normal(scale=0.1, size=1000)
        result = boxcox_profile(price, np.exp(log_speed))
        self.assertTrue(0.85 <= result.lambda_hat <= 1.15)
        self.assertLess(result.p_log, 0.001)

    def test_continuity_at_zero(self):
        """
        The profile is continuous at lambda = 0 and uses the log limit there
        """
        rng = substream(43, 0)
        speed = np.exp(rng.uniform(0, 4, size=100))
        price = np.exp(1 + 0.3 * np.log(speed) + rng.normal(scale=0.2, size=100))
        profile = BoxCoxProfile(price, speed)
        self.assertTrue(np.array_equal(boxcox_transform(price, 0), np.log(price)))
        self.assertAlmostEqual(profile(1e-6), profile(0.0), delta=1e-4)
        self.assertAlmostEqual(profile(-1e-6), profile(0.0), delta=1e-4)

    def test_nonpositive_price(self):
        """
        Zero prices are rejected
        """
        with self.assertRaises(NonpositiveP):
            boxcox_profile([1.0, 0.0, 2.0], [1.0, 2.0, 3.0])
