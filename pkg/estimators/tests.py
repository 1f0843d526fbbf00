import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from scipy import linalg
from scipy.special import expit

from estimators.design import pure_membership, with_treatments
from estimators.dml import DmlSpec, dml_plr, dml_plr_fit, fold_assignment, orthogonality_probe
from estimators.exceptions import FoldTooSmall, NoSwitchers, NuisanceFitFailure, UnbalancedPanelForFD
from estimators.pols import pols_fit
from estimators.switching import switching_frame, switching_logit
from estimators.twfe import TreatmentMode, TwfeSpec, first_difference_fit, twfe_fit
from primitives.exceptions import InputError, NoVariation
from primitives.forest import ForestParams
from simulation.config import ScenarioConfig
from simulation.panel import simulate_panel


def setup_test_data(cls):
    """
    Callback function to setup test data
    :param cls: TestCase Class
    """
    cls.config = ScenarioConfig(seed=7, n_hcps=120)
    cls.result = simulate_panel(cls.config, threads=1)
    cls.panel = cls.result.panel


def handcrafted_panel(shares=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)), trend=1.0, tau_12=-1.5, tau_12c=1.0):
    """
    One HCP per (S2, S2c) pair, all at 10 in period 0; period 1 adds the trend and S tau exactly.
    """
    rows = []
    for i, (s2, s2c) in enumerate(shares):
        after = 10.0 + trend + s2 * tau_12 + s2c * tau_12c
        for period, outcome in ((0, 10.0), (1, after)):
            rows.append({
                'hcp_id': 'H{0:05d}'.format(i), 'period': period, 'ln_price': outcome, 'ln_subsidy': outcome,
                'ln_netcost': outcome, 's2': s2 if period else 0.0, 's2c': s2c if period else 0.0,
                'ln_speed': 2.0, 'hcp_type': 'T0', 'service_type': 'V0', 'state': 'S00', 'n_requests': 1,
                'speed_mbps': np.exp(2.0),
            })
    return pd.DataFrame(rows)


def request_rows(n=600, shift=1.5, noise=0.0, seed=0):
    """
    Facility-year rows cycling through P1, P2, P2c; ln price of P2c is P2's plus ``shift``.
    """
    rng = np.random.default_rng(seed)
    program = np.arange(n) % 3
    ln_speed = rng.normal(3.0, 1.0, size=n)
    state = rng.choice(['S00', 'S01', 'S02'], size=n)
    level = np.select([program == 0, program == 1, program == 2], [1.0, 0.5, 0.5 + shift])
    ln_price = level + 0.3 * ln_speed + 0.2 * (state == 'S01') + rng.normal(0.0, noise, size=n)
    return pd.DataFrame({
        'hcp_id': ['H{0:05d}'.format(i // 2) for i in range(n)], 'period': rng.integers(0, 2, size=n),
        'p1': (program == 0).astype(int), 'p2': (program == 1).astype(int), 'p2c': (program == 2).astype(int),
        'ln_price': ln_price, 'ln_speed': ln_speed, 'state': state, 'hcp_type': 'T0', 'service_type': 'V0',
    })


def linear_dgp(n=5000, theta=2.0, seed=0):
    """
    Y = theta S + 3 X + e, S = X + v, all shocks standard normal
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    s = x + rng.normal(size=n)
    y = theta * s + 3 * x + rng.normal(size=n)
    return y, s, x


class PureMembershipTest(SimpleTestCase):
    """
    TestCase for pure_membership
    """

    def test_flags_mixed_rows(self):
        """
        Shares 0 or 1 are pure, anything in between is mixed
        """
        panel = pd.DataFrame({'s2': [0.0, 1.0, 0.4, 0.0], 's2c': [0.0, 0.0, 0.6, 1.0]})
        marked = pure_membership(panel)
        self.assertEquals(marked['pure'].tolist(), [True, True, False, True])
        self.assertEquals(marked['d2'].tolist(), [0, 1, 0, 0])
        self.assertEquals(marked['d2c'].tolist(), [0, 0, 1, 1])


class TwfeTest(SimpleTestCase):
    """
    TestCase for twfe_fit and first_difference_fit
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_handcrafted_did(self):
        """
        Stayer 10 -> 11, P2 switcher 10 -> 9.5, P2c switcher 10 -> 12: tau_12 = -1.5, tau_12c = 1, trend 1
        """
        fit = twfe_fit(handcrafted_panel())
        self.assertAlmostEqual(fit.get('tau_12'), -1.5, places=10)
        self.assertAlmostEqual(fit.get('tau_12c'), 1.0, places=10)
        self.assertAlmostEqual(fit.get('T'), 1.0, places=10)
        self.assertAlmostEqual(fit.extra['contrast'].estimate, 2.5, places=10)

    def test_partial_share_linearity(self):
        """
        A P2 switcher with S2 = 0.5 and outcome change 1 + 0.5 tau gives the same tau_12
        """
        panel = handcrafted_panel(shares=((0.0, 0.0), (0.5, 0.0), (0.0, 1.0), (1.0, 0.0)))
        for absorb in (False, True):
            fit = twfe_fit(panel, TwfeSpec(absorb_hcp=absorb))
            self.assertAlmostEqual(fit.get('tau_12'), -1.5, places=10)
            self.assertAlmostEqual(fit.get('tau_12c'), 1.0, places=10)

    def test_within_equals_first_difference(self):
        """
        Balanced two-period panel with time-varying speed: within and first differences agree to 1e-10
        """
        panel = self.panel.copy()
        panel['ln_speed'] = panel['ln_speed'] + np.random.default_rng(1).normal(0.0, 0.5, size=len(panel))
        spec = TwfeSpec(absorb_hcp=True)
        within = twfe_fit(panel, spec)
        difference = first_difference_fit(panel, spec)
        self.assertEquals(within.names, difference.names)
        np.testing.assert_allclose(within.coef, difference.coef, rtol=0, atol=1e-10)

    def test_pooled_equals_first_difference(self):
        """
        Time-invariant covariates: the pooled regression's effects equal first differences
        """
        panel = self.panel.copy()
        panel['ln_speed'] = panel.groupby('hcp_id')['ln_speed'].transform('first')
        pooled = twfe_fit(panel)
        difference = first_difference_fit(panel)
        for name in ('T', 'tau_12', 'tau_12c'):
            self.assertAlmostEqual(pooled.get(name), difference.get(name), delta=1e-10)

    def test_binary_equals_continuous_when_pure(self):
        """
        With every share in {0, 1} both modes give the same coefficients and covariance
        """
        marked = pure_membership(self.panel)
        mixed = set(marked.loc[~marked['pure'], 'hcp_id'])
        panel = self.panel[~self.panel['hcp_id'].isin(mixed)]
        continuous = twfe_fit(panel)
        binary = twfe_fit(panel, TwfeSpec(mode=TreatmentMode.BINARY))
        np.testing.assert_allclose(continuous.coef, binary.coef, rtol=0, atol=1e-12)
        np.testing.assert_allclose(continuous.cov, binary.cov, rtol=0, atol=1e-12)
        self.assertEquals(binary.extra['dropped_mixed'], 0)

    def test_binary_drops_mixed_hcps(self):
        """
        Binary mode removes whole HCPs with split bandwidth and reports how many
        """
        marked = pure_membership(self.panel)
        mixed = marked.loc[~marked['pure'], 'hcp_id'].nunique()
        fit = twfe_fit(self.panel, TwfeSpec(mode='binary'))
        self.assertEquals(fit.extra['dropped_mixed'], mixed)
        self.assertEquals(fit.n, len(self.panel) - 2 * mixed)
        if mixed:
            self.assertIn('dropped_mixed_hcps', fit.flags)

    def test_absent_margin(self):
        """
        No P2c switchers: tau_12c is absent, flagged and there is no contrast
        """
        fit = twfe_fit(handcrafted_panel(shares=((0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0))))
        self.assertNotIn('tau_12c', fit)
        self.assertIn('no_p2c_switchers', fit.flags)
        self.assertIsNone(fit.extra['contrast'])
        self.assertAlmostEqual(fit.get('tau_12'), -1.5, places=10)

    def test_no_switchers(self):
        """
        Nobody treated: both effects undefined
        """
        with self.assertRaises(NoSwitchers):
            twfe_fit(handcrafted_panel(shares=((0.0, 0.0), (0.0, 0.0))))

    def test_unbalanced_first_difference(self):
        """
        A missing period-1 row breaks the first-difference shortcut
        """
        panel = self.panel.drop(index=self.panel.index[-1])
        with self.assertRaises(UnbalancedPanelForFD):
            first_difference_fit(panel)

    def test_covariance_is_symmetric_psd(self):
        """
        Cluster-robust covariance is symmetric with non-negative eigenvalues
        """
        fit = twfe_fit(self.panel)
        np.testing.assert_allclose(fit.cov, fit.cov.T, atol=1e-10)
        self.assertGreaterEqual(np.linalg.eigvalsh(fit.cov).min(), -1e-10)
        self.assertEquals(fit.cov_type, 'cluster')
        self.assertEquals(fit.n_clusters, self.config.n_hcps)

    def test_both_r_squared_reported(self):
        """
        Overall and within R2 are both in [0, 1]
        """
        fit = twfe_fit(self.panel)
        self.assertTrue(0 <= fit.r_squared <= 1)
        self.assertTrue(0 <= fit.within_r_squared <= 1)

    def test_estimates_track_ground_truth(self):
        """
        Over eight replications the price effects stay within 4 standard errors of the truth
        """
        for replication in range(8):
            result = simulate_panel(self.config.for_replication(replication).update(n_hcps=200), threads=1)
            fit = twfe_fit(result.panel)
            for name, truth in (('tau_12', result.ground_truth.tau_12), ('tau_12c', result.ground_truth.tau_12c)):
                if truth['price'] is None:
                    continue
                self.assertLess(abs(fit.get(name) - truth['price']), 4 * fit.standard_error(name))

    def test_unknown_columns(self):
        """
        A covariate missing from the panel is a validation error
        """
        with self.assertRaises(InputError):
            twfe_fit(self.panel, TwfeSpec(covariates=('ln_bandwidth',)))


class PolsTest(SimpleTestCase):
    """
    TestCase for pols_fit
    """

    def test_log_shift_contrast(self):
        """
        P2c prices e^1.5 times P2 prices: b3 - b2 = 1.5
        """
        fit = pols_fit(request_rows(shift=1.5), fixed_effects=('period', 'state'))
        self.assertAlmostEqual(fit.extra['contrast'].estimate, 1.5, places=8)
        self.assertAlmostEqual(fit.get('ln_speed'), 0.3, places=8)
        self.assertNotIn('const', fit)

    def test_identical_programs(self):
        """
        Same outcome process for every program: b3 - b2 = 0
        """
        rows = request_rows(shift=0.0)
        rows['ln_price'] = 2.0 + 0.3 * rows['ln_speed']
        fit = pols_fit(rows, fixed_effects=('period', 'state'))
        self.assertAlmostEqual(fit.extra['contrast'].estimate, 0.0, places=8)

    def test_speed_shift_invariance(self):
        """
        Adding a constant to ln speed moves the program levels but not their contrast
        """
        rows = request_rows(noise=0.2, seed=3)
        shifted = rows.assign(ln_speed=rows['ln_speed'] + 5.0)
        base = pols_fit(rows, fixed_effects=('period', 'state'))
        moved = pols_fit(shifted, fixed_effects=('period', 'state'))
        self.assertAlmostEqual(base.extra['contrast'].estimate, moved.extra['contrast'].estimate, places=8)
        self.assertAlmostEqual(base.extra['contrast'].se, moved.extra['contrast'].se, places=8)

    def test_indicators_must_partition(self):
        """
        A row on two programs is rejected
        """
        rows = request_rows()
        rows.loc[0, 'p2'] = 1
        with self.assertRaises(InputError):
            pols_fit(rows, fixed_effects=('period', 'state'))

    def test_shares_on_panel(self):
        """
        The HCP panel with program shares fits with the same three program terms
        """
        result = simulate_panel(ScenarioConfig(seed=7, n_hcps=120), threads=1)
        fit = pols_fit(result.panel, shares=True)
        self.assertEquals(fit.names[:3], ('p1', 'p2', 'p2c'))
        self.assertIsNotNone(fit.extra['contrast'])

    def test_request_rows_from_simulation(self):
        """
        Facility-year rows of a simulation carry the indicators pols_fit needs
        """
        result = simulate_panel(ScenarioConfig(seed=7, n_hcps=60), threads=1)
        fit = pols_fit(result.request_rows())
        self.assertEquals(fit.n, len(result.facility_rows))


class DmlTest(SimpleTestCase):
    """
    TestCase for the cross-fitted partially linear estimator
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_mean_nuisances_equal_centered_ols(self):
        """
        Constant l and m fitted in-sample: theta is no-intercept OLS of centered Y on centered S
        """
        rng = np.random.default_rng(4)
        D = rng.normal(size=(300, 2))
        y = D @ np.array([1.0, -0.5]) + rng.normal(size=300)
        fit = dml_plr(y, D, rng.normal(size=(300, 3)), DmlSpec(learner='mean', cross_fit=False, k_folds=2))
        expected = linalg.lstsq(D - D.mean(axis=0), y - y.mean())[0]
        np.testing.assert_allclose(fit.coef, expected, rtol=0, atol=1e-10)

    def test_linear_nuisances_equal_pooled_regression(self):
        """
        In-sample linear nuisances on the panel reproduce the pooled TWFE effects
        """
        dml = dml_plr_fit(self.panel, DmlSpec(learner='linear', cross_fit=False, k_folds=2))
        pooled = twfe_fit(self.panel)
        for name in ('tau_12', 'tau_12c'):
            self.assertAlmostEqual(dml.get(name), pooled.get(name), delta=1e-8)

    def test_forest_recovers_theta(self):
        """
        Y = 2 S + 3 X + e with S = X + v, forest nuisances, n = 5,000: theta in 2 +- 0.1
        """
        y, s, x = linear_dgp()
        spec = DmlSpec(k_folds=5, forest=ForestParams(n_trees=20, min_leaf=50, max_depth=6), seed=1)
        fit = dml_plr(y, s, x, spec, names=('S',))
        self.assertAlmostEqual(fit.get('S'), 2.0, delta=0.1)

    def test_fold_relabeling(self):
        """
        Permuting fold labels with the same membership leaves theta unchanged
        """
        y, s, x = linear_dgp(n=400, seed=2)
        spec = DmlSpec(k_folds=4, forest=ForestParams(n_trees=5, min_leaf=10, max_depth=4), seed=5)
        folds = fold_assignment(len(y), 4, seed=9)
        first = dml_plr(y, s, x, spec, folds=folds)
        second = dml_plr(y, s, x, spec, folds=(folds + 2) % 4)
        np.testing.assert_array_equal(first.coef, second.coef)

    def test_thread_invariance(self):
        """
        Folds trained on four threads give the same estimate as on one
        """
        y, s, x = linear_dgp(n=400, seed=6)
        spec = DmlSpec(k_folds=4, forest=ForestParams(n_trees=5, min_leaf=10, max_depth=4))
        np.testing.assert_array_equal(dml_plr(y, s, x, spec, threads=1).coef,
                                      dml_plr(y, s, x, spec, threads=4).coef)

    def test_fold_too_small(self):
        """
        15 rows cannot be cut into 10 folds of two
        """
        with self.assertRaises(FoldTooSmall):
            dml_plr(np.zeros(15), np.arange(15.0), np.arange(15.0), DmlSpec(k_folds=10))

    def test_k_folds_at_least_two(self):
        """
        One fold is not cross-fitting
        """
        with self.assertRaises(InputError):
            DmlSpec(k_folds=1)

    def test_nuisance_failure_names_fold(self):
        """
        A learner that cannot fit on the training rows reports the held-out fold
        """
        y, s, x = linear_dgp(n=40, seed=1)
        spec = DmlSpec(k_folds=2, forest=ForestParams(n_trees=2, min_leaf=15))
        with self.assertRaises(NuisanceFitFailure) as caught:
            dml_plr(y, s, x, spec, threads=1)
        self.assertEquals(caught.exception.fold, 0)
        self.assertTrue(str(caught.exception).startswith('fold 0:'))

    def test_orthogonal_score_is_second_order(self):
        """
        Halving the nuisance perturbation quarters the movement of theta
        """
        y, s, x = linear_dgp(seed=8)
        fit = dml_plr(y, s, x, DmlSpec(k_folds=5, learner='linear'))
        check = orthogonality_probe(fit, epsilon=0.01)
        self.assertTrue(3.5 <= check.ratio <= 4.5)

    def test_first_order_sensitivity_detected(self):
        """
        A mean learner leaves X in both residuals, so theta moves linearly and the ratio is near 2
        """
        y, s, x = linear_dgp(seed=8)
        fit = dml_plr(y, s, x, DmlSpec(k_folds=5, learner='mean'), names=('S',))
        self.assertGreater(abs(fit.get('S') - 2.0), 1.0)
        check = orthogonality_probe(fit, epsilon=0.01)
        self.assertTrue(1.8 <= check.ratio <= 2.5)

    def test_covariance_is_symmetric_psd(self):
        """
        The sandwich covariance on the panel is symmetric PSD and clustering changes only the variance
        """
        spec = DmlSpec(k_folds=5, learner='linear')
        plain = dml_plr_fit(self.panel, spec)
        clustered = dml_plr_fit(self.panel, DmlSpec(k_folds=5, learner='linear', cluster='hcp_id'))
        for fit in (plain, clustered):
            np.testing.assert_allclose(fit.cov, fit.cov.T, atol=1e-10)
            self.assertGreaterEqual(np.linalg.eigvalsh(fit.cov).min(), -1e-10)
        np.testing.assert_array_equal(plain.coef, clustered.coef)
        self.assertEquals(clustered.cov_type, 'dml-cluster')
        self.assertIsNotNone(plain.extra['contrast'])

    def test_panel_without_switchers(self):
        """
        No treated HCP is an error before any fold is fitted
        """
        with self.assertRaises(NoSwitchers):
            dml_plr_fit(handcrafted_panel(shares=((0.0, 0.0),) * 20), DmlSpec(k_folds=2))


class SwitchingLogitTest(SimpleTestCase):
    """
    TestCase for switching_frame and switching_logit
    """

    @staticmethod
    def single_signal_frame(n=3000, seed=0):
        rng = np.random.default_rng(seed)
        h = rng.integers(0, 2, size=n).astype(float)
        return pd.DataFrame({
            'switched': (rng.uniform(size=n) < expit(-1.0 + 2.0 * h)).astype(int), 'H': h,
            'ln_speed': rng.normal(3.0, 1.0, size=n), 'ln_price': rng.normal(6.0, 0.5, size=n),
            'ln_requests': np.log(rng.integers(1, 6, size=n)),
        })

    def test_only_h_matters(self):
        """
        Covariates unrelated to switching add less than 0.01 pseudo-R2 to the H-only model
        """
        path = switching_logit(self.single_signal_frame())
        self.assertEquals(len(path.models), 4)
        self.assertLess(path.pseudo_r2[-1] - path.pseudo_r2[0], 0.01)
        self.assertAlmostEqual(sum(path.increments), path.pseudo_r2[-1], places=12)

    def test_h_sign(self):
        """
        The H coefficient is positive on 50 independent draws
        """
        for seed in range(50):
            path = switching_logit(self.single_signal_frame(n=500, seed=seed))
            self.assertGreater(path.final.get('H'), 0)
            self.assertEquals(len(path.coefficient_path('H')), 4)

    def test_no_switchers(self):
        """
        A single outcome class cannot be fitted
        """
        frame = self.single_signal_frame(n=100)
        frame['switched'] = 0
        with self.assertRaises(NoVariation):
            switching_logit(frame)

    def test_frame_from_simulation(self):
        """
        One row per HCP; the switch indicator matches the period-1 shares
        """
        result = simulate_panel(ScenarioConfig(seed=7, n_hcps=120), threads=1)
        frame = switching_frame(result.panel)
        post = with_treatments(result.panel)
        post = post[post['period'] == 1].set_index('hcp_id')
        self.assertEquals(len(frame), 120)
        self.assertEquals(frame['switched'].sum(), int(((post['g2'] + post['g2c']) > 0).sum()))
        self.assertTrue(set(frame['H'].unique()) <= {0.0, 1.0})
