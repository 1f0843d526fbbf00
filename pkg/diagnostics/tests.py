import math

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from diagnostics.cooks import cooks_threshold, cooks_trim
from diagnostics.exceptions import DegenerateDenominator, EmptyAfterRestriction, NoControlGroup
from diagnostics.forms import FORMS, functional_form_comparison
from diagnostics.hump import HumpVerdict, fwl_hump
from diagnostics.manski import manski_sensitivity
from diagnostics.oster import oster_bounds, oster_from_inputs
from diagnostics.support import OBSERVED_P2C_SPEED_RANGE, common_support
from estimators.twfe import TwfeSpec, twfe_fit
from primitives.exceptions import InputError, NonpositiveValues
from simulation.config import ScenarioConfig
from simulation.consortia import simulate_consortia
from simulation.panel import simulate_panel


def setup_test_data(cls):
    """
    Callback function to setup test data
    :param cls: TestCase Class
    """
    cls.config = ScenarioConfig(seed=7, n_hcps=120)
    cls.panel = simulate_panel(cls.config, threads=1).panel


def did_panel(n_per_group=20, trend=1.0, violation=1.0, tau_12=-1.5, tau_12c=1.0, noise=0.0, seed=0,
              speed_drift=0.0):
    """
    Stayers, full P2 switchers and full P2c switchers, n_per_group each. The
    treated groups' untreated trend is ``violation`` times the stayers'.
    """
    rng = np.random.default_rng(seed)
    rows = []
    groups = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
    for g, (s2, s2c) in enumerate(groups):
        for i in range(n_per_group):
            hcp = 'H{0}{1:04d}'.format(g, i)
            base = rng.normal(10.0, 1.0)
            mbps = math.exp(rng.normal(3.0, 1.0))
            drift = rng.normal(0.0, speed_drift) + 0.3 * (s2 + s2c) * speed_drift
            requests = int(rng.integers(1, 4))
            treated_trend = trend * (violation if s2 + s2c > 0 else 1.0)
            for period in (0, 1):
                ln_speed = math.log(mbps) + period * drift
                outcome = base + period * (treated_trend + s2 * tau_12 + s2c * tau_12c) + 0.2 * ln_speed
                outcome += rng.normal(0.0, noise) if noise > 0 else 0.0
                rows.append({
                    'hcp_id': hcp, 'period': period, 'ln_price': outcome, 'ln_subsidy': outcome - 0.5,
                    'ln_netcost': outcome - 1.0, 's2': s2 * period, 's2c': s2c * period, 'ln_speed': ln_speed,
                    'hcp_type': 'T0', 'service_type': 'V0', 'state': 'S00', 'n_requests': requests,
                    'speed_mbps': math.exp(ln_speed),
                })
    return pd.DataFrame(rows)


def homogeneous_panel(n_per_group=14, shock=0.1):
    """
    Identical HCPs within each group apart from a period-1 shock of alternating sign.
    """
    frame = did_panel(n_per_group=n_per_group)
    frame['ln_price'] = 10.0 + frame['period'] * (1.0 - 1.5 * frame['s2'] + frame['s2c'])
    index = frame['hcp_id'].str[2:].astype(int)
    frame.loc[frame['period'] == 1, 'ln_price'] += np.where(index % 2 == 0, shock, -shock)[frame['period'] == 1]
    frame['ln_subsidy'] = frame['ln_price']
    frame['ln_netcost'] = frame['ln_price']
    frame['ln_speed'] = 3.0
    return frame


def hump_rows(shape, n_consortia=50, years=10, seed=0):
    rng = np.random.default_rng(seed)
    n = n_consortia * years
    fraction = rng.uniform(0.0, 1.0, size=n)
    rows = pd.DataFrame({
        'consortium_id': np.repeat(['C{0:03d}'.format(k) for k in range(n_consortia)], years),
        'year': np.tile(np.arange(years), n_consortia), 'ineligible_fraction': fraction,
        'mean_bidders': rng.poisson(1.5, size=n).astype(float), 'ln_mean_speed': rng.normal(3.0, 0.6, size=n),
        'ln_total_speed': rng.normal(4.5, 0.8, size=n),
    })
    rows['ln_price'] = shape(fraction) + rng.normal(0.0, 0.05, size=n)
    return rows


class ManskiTest(SimpleTestCase):
    """
    TestCase for manski_sensitivity
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_parallel_trends_is_unadjusted(self):
        """
        g = 1 returns the canonical DiD estimate exactly; g = 0 adds the control trend
        """
        curve = manski_sensitivity(self.panel, 'P2', g_grid=(0.0, 1.0, 2.0))
        self.assertEquals(curve.estimates[1], curve.beta_did)
        self.assertAlmostEqual(curve.estimates[0], curve.beta_did + curve.beta_zero, places=12)

    def test_affine_in_g(self):
        """
        Every grid point lies on the line with slope -beta0
        """
        curve = manski_sensitivity(self.panel, 'P2c')
        slopes = np.diff(curve.estimates) / np.diff(curve.grid)
        np.testing.assert_allclose(slopes, -curve.beta_zero, rtol=0, atol=1e-10)

    def test_canonical_sample_drops_other_margin(self):
        """
        The P2 curve is estimated without any HCP on P2c, so tau_12c is absent
        """
        curve = manski_sensitivity(self.panel, 'P2')
        self.assertIn('no_p2c_switchers', curve.flags)

    def test_recovers_effect_under_violation(self):
        """
        Treated trend 1.3 times the control trend: the robust effect at g = 1.3 is the true -1.5
        """
        panel = did_panel(violation=1.3)
        curve = manski_sensitivity(panel, 'P2', g_grid=(1.0, 1.3))
        self.assertAlmostEqual(curve.estimates[1], -1.5, places=8)
        self.assertAlmostEqual(curve.estimates[0], -1.5 + 0.3, places=8)

    def test_zero_crossing(self):
        """
        The crossing g solves beta_did + (1 - g) beta0 = 0
        """
        panel = did_panel(trend=1.0, tau_12=-0.5)
        curve = manski_sensitivity(panel, 'P2')
        self.assertAlmostEqual(curve.zero_crossing, 0.5, places=8)

    def test_no_control_group(self):
        """
        Without stayers there is no control trend
        """
        panel = did_panel()
        panel = panel[panel['hcp_id'].str.startswith('H1')]
        with self.assertRaises(NoControlGroup):
            manski_sensitivity(panel, 'P2')


class OsterTest(SimpleTestCase):
    """
    TestCase for oster_from_inputs and oster_bounds
    """

    def test_anchor_inputs(self):
        """
        b~ = -0.261, b = -1.249, R2~ = 0.043, R2 = 0.387, R2max = 0.502: delta near -3.78, beta* near -1.58
        """
        report = oster_from_inputs(-0.261, -1.249, 0.043, 0.387, 0.502)
        self.assertTrue(-3.9 <= report.delta <= -3.6)
        self.assertTrue(-1.62 <= report.beta_star <= -1.54)
        self.assertEquals(report.verdict, 'Moves')

    def test_default_r2_max(self):
        """
        R2max = min(1.3 R2, 1)
        """
        self.assertAlmostEqual(oster_from_inputs(0.1, 0.2, 0.1, 0.5).r2_max, 0.65, places=12)
        self.assertEquals(oster_from_inputs(0.1, 0.2, 0.1, 0.9).r2_max, 1.0)

    def test_stable_coefficient(self):
        """
        b~ = b: Stable, delta infinite and beta* = b
        """
        report = oster_from_inputs(-0.5, -0.5, 0.1, 0.3)
        self.assertEquals(report.verdict, 'Stable')
        self.assertEquals(report.delta, math.inf)
        self.assertEquals(report.beta_star, -0.5)

    def test_degenerate_denominator(self):
        """
        Equal R2 with a moving coefficient leaves beta* undefined
        """
        with self.assertRaises(DegenerateDenominator):
            oster_from_inputs(-0.2, -0.5, 0.3, 0.3)

    def test_short_r2_above_long(self):
        """
        The short model cannot explain more than the long one
        """
        with self.assertRaises(InputError):
            oster_from_inputs(-0.2, -0.5, 0.4, 0.3)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.0, 0.45), st.floats(0.05, 0.5))
    def test_formula_identities(self, beta_short, beta_long, r2_short, gain):
        """
        delta and beta* satisfy their defining equations
        """
        r2_long = r2_short + gain
        report = oster_from_inputs(beta_short, beta_long, r2_short, r2_long)
        if report.verdict == 'Stable':
            return
        movement = beta_short - beta_long
        headroom = report.r2_max - r2_long
        self.assertAlmostEqual(report.delta * movement * headroom, beta_long * gain,
                               delta=1e-12 * max(1.0, abs(beta_long * gain)) + 1e-12 * abs(report.delta))
        self.assertAlmostEqual(report.beta_star, beta_long - movement * headroom / gain,
                               delta=1e-12 * max(1.0, abs(report.beta_star)))

    def test_bounds_from_panel(self):
        """
        Time-varying speed: one report per treatment with the within R2 of each model
        """
        panel = did_panel(noise=0.1, speed_drift=0.5, seed=2)
        reports = oster_bounds(panel)
        self.assertEquals(set(reports), {'tau_12', 'tau_12c'})
        for report in reports.values():
            self.assertLessEqual(report.r2_short, report.r2_long + 1e-12)

    def test_bounds_on_simulated_panel(self):
        """
        Period-1 speed upgrades vary within HCP, so the long model moves each coefficient
        """
        panel = simulate_panel(ScenarioConfig(seed=7, n_hcps=120), threads=1).panel
        reports = oster_bounds(panel)
        self.assertGreater(len(reports), 0)
        for report in reports.values():
            self.assertNotEqual(report.beta_short, report.beta_long)
            self.assertGreater(report.r2_long, report.r2_short)
            self.assertEquals(report.verdict, 'Moves')

    def test_bounds_without_speed_upgrades(self):
        """
        Without period-1 speed changes the controls are absorbed by the HCP effects
        """
        config = ScenarioConfig(seed=7, n_hcps=120, speed_upgrade_sd=0.0, switch_speed_gain=0.0)
        reports = oster_bounds(simulate_panel(config, threads=1).panel)
        for report in reports.values():
            self.assertEquals(report.verdict, 'Stable')
            self.assertAlmostEqual(report.beta_short, report.beta_long, places=10)

    def test_short_must_be_nested(self):
        """
        Short covariates outside the long set are rejected
        """
        with self.assertRaises(InputError):
            oster_bounds(did_panel(), TwfeSpec(covariates=('ln_speed',)), TwfeSpec(covariates=()))


class CooksTest(SimpleTestCase):
    """
    TestCase for cooks_trim
    """

    def test_threshold(self):
        """
        N = 1,940 flags D above 0.002062
        """
        self.assertAlmostEqual(cooks_threshold(1940), 0.002062, places=6)

    def test_homogeneous_panel_has_no_flags(self):
        """
        Equal leverage and equal absolute residuals put every D at 1 / (N - 3), below 4 / N
        """
        panel = homogeneous_panel()
        self.assertGreater(len(panel), 80)
        report = cooks_trim(panel)
        self.assertEquals(report.flagged_hcps, [])
        distances = report.distances['d_ln_price']
        np.testing.assert_allclose(distances, 1.0 / (len(panel) - 3), rtol=1e-8)

    def test_gross_outlier_flagged(self):
        """
        One HCP shifted by 100 noise sd in period 1 is flagged and dropped whole
        """
        panel = did_panel(noise=0.1, seed=4)
        target = panel['hcp_id'] == 'H10003'
        panel.loc[target & (panel['period'] == 1), 'ln_price'] += 10.0
        report = cooks_trim(panel)
        self.assertIn('H10003', report.flagged_hcps)
        self.assertEquals(report.trimmed['ln_price'].n, len(panel) - 2 * len(report.flagged_hcps))
        table = report.delta_table()
        self.assertEquals(set(table['outcome']), {'ln_price', 'ln_subsidy', 'ln_netcost'})

    def test_row_order_invariance(self):
        """
        Shuffling rows flags the same HCPs with the same distances
        """
        panel = did_panel(noise=0.1, seed=5)
        shuffled = panel.sample(frac=1.0, random_state=3)
        first = cooks_trim(panel)
        second = cooks_trim(shuffled)
        self.assertEquals(first.flagged_hcps, second.flagged_hcps)
        keyed = first.distances.set_index(['hcp_id', 'period']).sort_index()
        reordered = second.distances.set_index(['hcp_id', 'period']).sort_index()
        np.testing.assert_allclose(keyed.to_numpy(), reordered.to_numpy(), rtol=1e-8, atol=1e-14)


class SupportTest(SimpleTestCase):
    """
    TestCase for common_support
    """

    def test_full_range_is_identity(self):
        """
        A range covering every speed refits the baseline exactly
        """
        panel = did_panel(noise=0.1)
        report = common_support(panel, speed_range=(0.0, math.inf))
        np.testing.assert_array_equal(report.baseline.coef, report.restricted.coef)
        self.assertEquals(report.dropped_hcps, [])

    def test_constant_effect_survives_restriction(self):
        """
        Homogeneous effects: restricting to the P2c speed range barely moves tau
        """
        panel = did_panel(noise=0.01, seed=6)
        report = common_support(panel, 'P2c')
        for term in ('tau_12', 'tau_12c'):
            self.assertAlmostEqual(report.restricted.get(term), report.baseline.get(term), delta=0.02)
        low, high = report.speed_range
        self.assertLessEqual(low, high)

    def test_observed_default_range(self):
        """
        The documented P2c range is [1.5, 139.6] Mbps
        """
        self.assertEquals(OBSERVED_P2C_SPEED_RANGE, (1.5, 139.6))

    def test_empty_after_restriction(self):
        """
        A range above every speed leaves nothing to fit
        """
        with self.assertRaises(EmptyAfterRestriction):
            common_support(did_panel(), speed_range=(1e6, 2e6))

    def test_no_anchor_switchers(self):
        """
        No P2c switcher: no range to anchor on
        """
        panel = did_panel()
        panel = panel[~panel['hcp_id'].str.startswith('H2')]
        with self.assertRaises(EmptyAfterRestriction):
            common_support(panel, 'P2c')


class HumpTest(SimpleTestCase):
    """
    TestCase for fwl_hump
    """

    def test_planted_hump(self):
        """
        ln price = -(f - 0.4)^2 + noise: InvertedU peaking at 0.4 +- 0.05
        """
        report = fwl_hump(hump_rows(lambda f: -(f - 0.4) ** 2), fixed_effects=('year',))
        self.assertEquals(report.verdict, HumpVerdict.INVERTED_U)
        self.assertAlmostEqual(report.peak_location, 0.4, delta=0.05)

    def test_planted_monotone(self):
        """
        ln price linear in f is Monotone
        """
        report = fwl_hump(hump_rows(lambda f: 0.5 * f), fixed_effects=('year',))
        self.assertEquals(report.verdict, HumpVerdict.MONOTONE)

    def test_constant_fraction_is_flat(self):
        """
        No variation in the fraction: Flat, flagged
        """
        rows = hump_rows(lambda f: -(f - 0.4) ** 2)
        rows['ineligible_fraction'] = 0.3
        report = fwl_hump(rows)
        self.assertEquals(report.verdict, HumpVerdict.FLAT)
        self.assertIn('degenerate_fraction', report.flags)

    def test_fwl_identity(self):
        """
        Residual-on-residual slope equals the joint-regression coefficient with both fixed-effect sets
        """
        rows = simulate_consortia(ScenarioConfig(seed=3), n_consortia=60, years=8)
        report = fwl_hump(rows)
        self.assertAlmostEqual(report.fwl_slope, report.fwl_coefficient, delta=1e-8)

    def test_simulated_consortia_hump(self):
        """
        Consortium rows with the optimal distortion peak near the fraction 0.5 where R = 1
        """
        rows = simulate_consortia(ScenarioConfig(seed=3), n_consortia=80, years=8)
        report = fwl_hump(rows)
        self.assertEquals(report.verdict, HumpVerdict.INVERTED_U)
        self.assertAlmostEqual(report.peak_location, 0.5, delta=0.1)

    def test_too_few_rows(self):
        """
        Fewer than 50 consortium rows is a usage error
        """
        with self.assertRaises(InputError):
            fwl_hump(hump_rows(lambda f: f, n_consortia=4, years=10))


class FunctionalFormTest(SimpleTestCase):
    """
    TestCase for functional_form_comparison
    """

    @staticmethod
    def speeds(n=1000, seed=0):
        return np.exp(np.random.default_rng(seed).uniform(0.0, 5.0, size=n))

    def test_eight_forms_ranked(self):
        """
        All eight forms are fitted and ranked by adjusted R2
        """
        speed = self.speeds()
        price = 5 + 3 * np.log(speed) + np.random.default_rng(1).normal(0.0, 0.1, size=len(speed))
        fits = functional_form_comparison(price, speed)
        self.assertEquals(sorted(fit.name for fit in fits), sorted(FORMS))
        self.assertEquals([fit.rank for fit in fits], list(range(1, 9)))
        self.assertEquals(fits[0].name, 'lin-log')

    def test_log_log_dgp(self):
        """
        ln P = 1 + 0.4 ln S + noise: a log form ranks first, ahead of the linear form
        """
        speed = self.speeds(seed=2)
        price = np.exp(1 + 0.4 * np.log(speed) + np.random.default_rng(3).normal(0.0, 0.05, size=len(speed)))
        fits = functional_form_comparison(price, speed)
        self.assertIn(fits[0].name, ('log-log', 'log-quadratic'))
        by_name = {fit.name: fit for fit in fits}
        self.assertLess(by_name['linear'].r_squared, fits[0].r_squared)

    def test_exact_linear(self):
        """
        P = a + b S without noise: the linear form has R2 = 1
        """
        speed = self.speeds(n=200)
        fits = {fit.name: fit for fit in functional_form_comparison(2.0 + 0.5 * speed, speed)}
        self.assertAlmostEqual(fits['linear'].r_squared, 1.0, places=10)

    def test_nonpositive_speed(self):
        """
        Zero speed cannot enter the log forms
        """
        with self.assertRaises(NonpositiveValues):
            functional_form_comparison([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])

    def test_simulated_panel_speeds(self):
        """
        Pre-period HCP prices and speeds from a simulation rank without error
        """
        panel = simulate_panel(ScenarioConfig(seed=5, n_hcps=80), threads=1).panel
        pre = panel[panel['period'] == 0]
        fits = functional_form_comparison(np.exp(pre['ln_price']), pre['speed_mbps'])
        self.assertEquals(len(fits), 8)


class TwfeWithinConsistencyTest(SimpleTestCase):
    """
    TestCase for the synthetic DiD panel used across the diagnostics
    """

    def test_did_panel_effects(self):
        """
        Noiseless panel with parallel trends: TWFE returns the planted effects
        """
        fit = twfe_fit(did_panel())
        self.assertAlmostEqual(fit.get('tau_12'), -1.5, places=8)
        self.assertAlmostEqual(fit.get('tau_12c'), 1.0, places=8)
