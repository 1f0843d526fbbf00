import math

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from mechanism.consortium import ConsortiumParams, consortium_optimum
from mechanism.demand import LinearDemand, MarketParams
from mechanism.solvers import solve_ad_valorem
from simulation.config import ScenarioConfig
from simulation.consortia import simulate_consortia
from simulation.exceptions import EmptyHcp, InvalidScenario, RejectionLimit
from simulation.panel import (Program, aggregate_to_hcp, assign_switching,
                              recompute_ground_truth, simulate_panel, trended)
from simulation.population import Facility, generate_population


def setup_test_data(cls):
    """
    Callback function to setup test data
    :param cls: TestCase Class
    """
    cls.config = ScenarioConfig(seed=7, n_hcps=120, outcome_noise=0.0)
    cls.result = simulate_panel(cls.config, threads=1)


def make_facility(facility_id, urban_price, pbar=55.0, gamma=1.0):
    """
    a=100, b=1, c=20, alpha=0.5: the capped price is pbar + 2 D(pbar) / gamma
    """
    return Facility(facility_id=facility_id, hcp_id='H{0:05d}'.format(facility_id),
                    demand=LinearDemand(100.0, 1.0),
                    params=MarketParams(c=20.0, pbar=pbar, tau=0.65, alpha=0.5, gamma=gamma),
                    urban_price=urban_price, mbps=10.0, state='S00', hcp_type='T0', service_type='V0')


def facility_frame(rows):
    return pd.DataFrame(rows, columns=['facility_id', 'hcp_id', 'period', 'program', 'mbps', 'ln_price'])


class ScenarioConfigTest(SimpleTestCase):
    """
    TestCase for ScenarioConfig validation
    """

    def test_invalid_values_are_collected(self):
        """
        Every offending field is reported at once
        """
        with self.assertRaises(InvalidScenario) as caught:
            ScenarioConfig(seed=1, tau=1.2, cap_fraction=(0.9, 1.1))
        self.assertEquals(len(caught.exception.problems), 2)

    def test_seed_is_mandatory(self):
        """
        A negative or non-integer seed is rejected
        """
        with self.assertRaises(InvalidScenario):
            ScenarioConfig(seed=-1)
        with self.assertRaises(InvalidScenario):
            ScenarioConfig(seed=1.5)

    def test_peak_ratio(self):
        """
        R* = 1 / sqrt(consortium_enforcement)
        """
        self.assertEquals(ScenarioConfig(seed=1, consortium_enforcement=4.0).peak_ratio, 0.5)


class PopulationTest(SimpleTestCase):
    """
    TestCase for generate_population
    """

    def test_empty_population(self):
        """
        n_hcps = 0 gives no facilities
        """
        population = generate_population(ScenarioConfig(seed=1, n_hcps=0))
        self.assertEquals(len(population), 0)
        self.assertEquals(population.n_hcps, 0)

    def test_deterministic_in_seed(self):
        """
        Same seed twice gives identical facilities; another seed does not
        """
        first = generate_population(ScenarioConfig(seed=11, n_hcps=40)).frame()
        second = generate_population(ScenarioConfig(seed=11, n_hcps=40), threads=4).frame()
        other = generate_population(ScenarioConfig(seed=12, n_hcps=40)).frame()
        pd.testing.assert_frame_equal(first, second)
        self.assertFalse(first['a'].equals(other['a']))

    def test_facility_count(self):
        """
        970 HCPs with mean 2 facilities: count within 3 sd of 1,940
        """
        population = generate_population(ScenarioConfig(seed=3, n_hcps=970))
        self.assertLess(abs(len(population) - 1940), 3 * math.sqrt(970))

    def test_draws_are_admissible(self):
        """
        a > b c, the cap lies below the monopoly price and weights are positive
        """
        frame = generate_population(ScenarioConfig(seed=5, n_hcps=60)).frame()
        self.assertTrue((frame['a'] > frame['b'] * frame['c']).all())
        self.assertTrue((frame['pbar'] < (frame['a'] / frame['b'] + frame['c']) / 2).all())
        self.assertTrue((frame['mbps'] > 0).all())
        self.assertEquals(frame['facility_id'].tolist(), list(range(len(frame))))

    def test_rejection_limit(self):
        """
        Intercepts never above b c exhaust the attempts
        """
        config = ScenarioConfig(seed=1, n_hcps=1, demand_intercept=(1.0, 2.0), cost_range=(50.0, 60.0),
                                max_attempts=10000)
        with self.assertRaises(RejectionLimit):
            generate_population(config)


class SwitchingTest(SimpleTestCase):
    """
    TestCase for assign_switching
    """

    def test_deterministic_rule(self):
        """
        Noise 0: p / p_u = 3 switches, p / p_u = 2 stays
        """
        config = ScenarioConfig(seed=1, switching_noise=0.0, consortium_share=0.0)
        # capped price is 55 + 90 = 145
        assignment = assign_switching([make_facility(0, 145.0 / 3), make_facility(1, 72.5)], config)
        self.assertEquals(assignment['program'].tolist(), [Program.P2.value, Program.P1.value])
        self.assertAlmostEqual(assignment['urban_ratio'][0], 3.0)

    def test_logistic_symmetry_at_threshold(self):
        """
        Noise 1 at p / p_u = 1 / 0.35 exactly: switch rate 0.5 +- 0.02 over 10,000 facilities
        """
        config = ScenarioConfig(seed=2, switching_noise=1.0, consortium_share=0.0)
        facilities = [make_facility(i, 145.0 * 0.35) for i in range(10000)]
        assignment = assign_switching(facilities, config)
        rate = (assignment['program'] != Program.P1.value).mean()
        self.assertLess(abs(rate - 0.5), 0.02)

    def test_benefit_required(self):
        """
        A cap below p_no(0) leaves no interior critical rate, so nobody switches
        """
        config = ScenarioConfig(seed=1, switching_noise=0.0)
        facility = make_facility(0, 1.0, pbar=40.0)
        self.assertEquals(assign_switching([facility], config)['program'][0], Program.P1.value)
        relaxed = config.update(require_benefit=False, consortium_share=0.0)
        self.assertEquals(assign_switching([facility], relaxed)['program'][0], Program.P2.value)

    def test_consortium_routing(self):
        """
        consortium_share = 1 sends every switcher to P2c with a revenue ratio inside the span
        """
        config = ScenarioConfig(seed=1, switching_noise=0.0, consortium_share=1.0, consortium_ratio_span=4.0)
        assignment = assign_switching([make_facility(i, 20.0) for i in range(50)], config)
        self.assertTrue((assignment['program'] == Program.P2C.value).all())
        self.assertTrue(assignment['revenue_ratio'].between(0.25, 4.0).all())


class AggregationTest(SimpleTestCase):
    """
    TestCase for aggregate_to_hcp
    """

    def test_single_facility(self):
        """
        A one-facility HCP equals its facility
        """
        rows = facility_frame([(0, 'H1', 0, 'P1', 5.0, 2.5), (0, 'H1', 1, 'P2', 5.0, 2.0)])
        panel = aggregate_to_hcp(rows)
        self.assertEquals(panel['ln_price'].tolist(), [2.5, 2.0])
        self.assertEquals(panel['s2'].tolist(), [0.0, 1.0])
        self.assertAlmostEqual(panel['ln_speed'][0], math.log(5.0))

    def test_equal_weight_mean(self):
        """
        Two facilities with equal weight at 10 and 20 average to 15; one on P2 gives S2 = 0.5
        """
        rows = facility_frame([(0, 'H1', 1, 'P2', 4.0, 10.0), (1, 'H1', 1, 'P1', 4.0, 20.0)])
        panel = aggregate_to_hcp(rows)
        self.assertEquals(panel['ln_price'][0], 15.0)
        self.assertEquals(panel['s2'][0], 0.5)
        self.assertEquals(panel['s2c'][0], 0.0)
        self.assertEquals(panel['n_requests'][0], 2)
        self.assertEquals(panel['speed_mbps'][0], 8.0)

    def test_empty_hcp(self):
        """
        Zero total weight is an error
        """
        rows = facility_frame([(0, 'H1', 0, 'P1', 0.0, 1.0)])
        with self.assertRaises(EmptyHcp):
            aggregate_to_hcp(rows)


class PanelTest(SimpleTestCase):
    """
    TestCase for simulate_panel and the ground truth
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_two_rows_per_hcp(self):
        """
        Every HCP appears once per period
        """
        panel = self.result.panel
        self.assertEquals(len(panel), 2 * self.config.n_hcps)
        self.assertTrue((panel.groupby(['hcp_id', 'period']).size() == 1).all())
        self.assertEquals(panel['hcp_id'].nunique(), self.config.n_hcps)

    def test_pre_period_shares_zero(self):
        """
        Nobody is treated in period 0 and shares never exceed 1
        """
        panel = self.result.panel
        pre = panel[panel['period'] == 0]
        self.assertTrue((pre['s2'] == 0).all() and (pre['s2c'] == 0).all())
        self.assertTrue((panel['s2'] + panel['s2c'] <= 1 + 1e-12).all())

    def test_shares_partition_bandwidth(self):
        """
        P1, P2 and P2c weights add up to the HCP total
        """
        rows = self.result.facility_rows
        post = rows[rows['period'] == 1]
        total = post.groupby('hcp_id')['mbps'].sum()
        by_program = post.groupby(['hcp_id', 'program'])['mbps'].sum().unstack(fill_value=0.0)
        np.testing.assert_allclose(by_program.sum(axis=1).to_numpy(), total.to_numpy(), rtol=1e-12)

    def test_stayer_trend(self):
        """
        With noise 0 and no violation, stayers' log price moves by exactly the trend
        """
        rows = self.result.facility_rows
        stayers = rows[rows['facility_id'].isin(rows[(rows['period'] == 1) & (rows['program'] == 'P1')]['facility_id'])]
        change = stayers.groupby('facility_id')['ln_price'].agg(lambda s: s.iloc[1] - s.iloc[0])
        np.testing.assert_allclose(change.to_numpy(), self.config.trend, atol=1e-12)

    def test_switchers_on_both_margins(self):
        """
        The default scenario produces both kinds of switchers
        """
        truth = self.result.ground_truth
        self.assertGreater(truth.n_switchers['P2'], 0)
        self.assertGreater(truth.n_switchers['P2c'], 0)
        self.assertLess(truth.tau_12['price'], 0)
        self.assertGreater(truth.tau_12c['price'], 0)

    def test_ground_truth_recomputable(self):
        """
        Recomputing from the facility record gives the stored values exactly
        """
        again = recompute_ground_truth(self.result.facility_rows)
        self.assertEquals(again.tau_12, self.result.ground_truth.tau_12)
        self.assertEquals(again.tau_12c, self.result.ground_truth.tau_12c)

    def test_consortium_inflation(self):
        """
        P2c billed price is kappa* times the ad valorem price, with kappa* >= 1
        """
        rows = self.result.facility_rows
        consortium = rows[(rows['period'] == 1) & (rows['program'] == 'P2c')]
        facilities = {f.facility_id: f for f in self.result.population.facilities}
        scale = math.exp(self.config.trend_violation * self.config.trend)
        for _, row in consortium.iterrows():
            self.assertGreaterEqual(row['kappa'], 1.0)
            demand, params = trended(facilities[row['facility_id']], scale)
            expected = math.log(row['kappa'] * solve_ad_valorem(demand, params).billed_price)
            self.assertAlmostEqual(row['ln_price_clean'], expected, places=10)

    def test_speed_upgrades(self):
        """
        Period-1 log speed moves per facility, and switchers upgrade more on average
        """
        rows = self.result.facility_rows.sort_values(['facility_id', 'period'])
        change = rows.groupby('facility_id')['ln_speed'].agg(lambda s: s.iloc[1] - s.iloc[0])
        switched = rows[rows['period'] == 1].set_index('facility_id')['program'] != 'P1'
        self.assertGreater(change.std(), 0.1)
        self.assertGreater(change[switched[switched].index].mean(), change[switched[~switched].index].mean())
        panel = self.result.panel
        self.assertGreater(panel.groupby('hcp_id')['ln_speed'].nunique().min(), 1)

    def test_fixed_speed(self):
        """
        No growth and no upgrades keep every HCP's speed constant
        """
        config = self.config.update(n_hcps=20, speed_upgrade_sd=0.0, switch_speed_gain=0.0)
        panel = simulate_panel(config, threads=1).panel
        self.assertTrue((panel.groupby('hcp_id')['ln_speed'].nunique() == 1).all())

    def test_thread_count_invariance(self):
        """
        Four threads give the same panel as one
        """
        parallel = simulate_panel(self.config, threads=4)
        pd.testing.assert_frame_equal(parallel.panel, self.result.panel)

    def test_rate_below_critical(self):
        """
        tau below every facility's critical rate with noise 0: no switchers, both effects undefined
        """
        result = simulate_panel(ScenarioConfig(seed=4, n_hcps=30, tau=0.05, switching_noise=0.0))
        truth = result.ground_truth
        self.assertEquals(truth.switch_rate, 0.0)
        self.assertIsNone(truth.tau_12['price'])
        self.assertIsNone(truth.tau_12c['price'])
        self.assertIn('no_switchers', truth.flags)

    def test_handcrafted_ground_truth(self):
        """
        Stayer +1, P2 switcher -0.5, P2c switcher +2 in log points: effects -1.5 and +1 net of the trend
        """
        rows = facility_frame([
            (0, 'H1', 0, 'P1', 1.0, 10.0), (0, 'H1', 1, 'P1', 1.0, 11.0),
            (1, 'H2', 0, 'P1', 1.0, 10.0), (1, 'H2', 1, 'P2', 1.0, 9.5),
            (2, 'H3', 0, 'P1', 1.0, 10.0), (2, 'H3', 1, 'P2c', 1.0, 12.0),
        ])
        rows['ln_price_cf'] = [10.0, 11.0, 10.0, 11.0, 10.0, 11.0]
        truth = recompute_ground_truth(rows)
        self.assertEquals(truth.tau_12['price'], -1.5)
        self.assertEquals(truth.tau_12c['price'], 1.0)


class ConsortiaTest(SimpleTestCase):
    """
    TestCase for simulate_consortia
    """

    def test_hump_rows(self):
        """
        Prices follow kappa*(R) p_E and the fraction is R / (1 + R)
        """
        config = ScenarioConfig(seed=9, consortium_enforcement=1.0, consortium_ratio_span=8.0)
        rows = simulate_consortia(config, n_consortia=20, years=5, noise=0.0)
        self.assertEquals(len(rows), 100)
        np.testing.assert_allclose(rows['ineligible_fraction'], rows['revenue_ratio'] / (1 + rows['revenue_ratio']))
        self.assertTrue(rows['ineligible_fraction'].between(1 / 9, 8 / 9).all())
        self.assertTrue((rows['kappa'] <= 2.0 + 1e-12).all())
        for ratio, kappa in zip(rows['revenue_ratio'], rows['kappa']):
            # alpha gamma B = 1 so kappa* depends on R alone
            expected = consortium_optimum(ConsortiumParams(B=1.0, R=ratio)).kappa_star
            self.assertAlmostEqual(kappa, expected, places=10)

    def test_deterministic(self):
        """
        Same seed and thread counts 1 and 3 give identical rows
        """
        config = ScenarioConfig(seed=9)
        pd.testing.assert_frame_equal(simulate_consortia(config, n_consortia=10, threads=1),
                                      simulate_consortia(config, n_consortia=10, threads=3))
