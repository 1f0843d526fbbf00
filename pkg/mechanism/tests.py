import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from mechanism.consortium import (ConsortiumParams, ConsortiumRegime, consortium_from_markets,
                                  consortium_objective, consortium_objective_slope, consortium_optimum,
                                  kappa_curve)
from mechanism.demand import GeneralDemand, LinearDemand, MarketParams, Regime
from mechanism.dominance import dominance_report
from mechanism.exceptions import (CapNotBinding, InvalidParameters, NonMonotoneDemand, NonpositiveQuantity,
                                  PreconditionUnmet, ZeroDemand)
from mechanism.solvers import (CriticalStatus, cap_binds, closed_forms, critical_tau, elasticity,
                               insulation_rent, lerner_residual, solve_ad_valorem, solve_monopoly_price,
                               solve_price_cap)
from primitives.exceptions import NoBracket
from primitives.optimize import polish_root


def setup_test_data(cls):
    cls.demand = LinearDemand(a=100.0, b=1.0)
    cls.exponential = GeneralDemand(lambda p: math.exp(-p), lambda p: -math.exp(-p), (0.0, 50.0))
    cls.params = MarketParams(c=20.0, pbar=40.0, tau=0.65, alpha=0.5, gamma=3.0)


@st.composite
def admissible_markets(draw):
    """
    Linear demand with a binding cap and an interior critical rate; tau >= tau*.
    """
    a = draw(st.floats(min_value=20.0, max_value=500.0))
    b = draw(st.floats(min_value=0.2, max_value=5.0))
    c = draw(st.floats(min_value=0.5, max_value=0.9)) * a / b
    p_no = (a / b + c) / 2
    tau_star = draw(st.floats(min_value=0.02, max_value=0.95))
    pbar = p_no - tau_star * c / 2
    tau = tau_star + draw(st.floats(min_value=0.0, max_value=0.99)) * (1 - tau_star) * 0.999
    alpha = draw(st.floats(min_value=0.05, max_value=1.0))
    gamma = draw(st.floats(min_value=0.01, max_value=10.0))
    return LinearDemand(a, b), MarketParams(c=c, pbar=pbar, tau=tau, alpha=alpha, gamma=gamma)


class DemandTest(SimpleTestCase):
    """
    TestCase for demand and parameter construction
    """

    def test_linear_requires_positive_coefficients(self):
        """
        a <= 0 or b <= 0 is a construction error
        """
        with self.assertRaises(InvalidParameters):
            LinearDemand(a=-1.0, b=1.0)
        with self.assertRaises(InvalidParameters):
            LinearDemand(a=1.0, b=0.0)

    def test_general_demand_spot_checks_monotonicity(self):
        """
        An increasing evaluator is rejected at construction
        """
        with self.assertRaises(NonMonotoneDemand):
            GeneralDemand(lambda p: 1 + p, support_hint=(0.0, 10.0))

    def test_market_params_ranges(self):
        """
        Out-of-range tau and alpha are rejected together
        """
        with self.assertRaises(InvalidParameters) as caught:
            MarketParams(c=1.0, pbar=2.0, tau=1.5, alpha=0.0, gamma=1.0)
        self.assertIn('tau', str(caught.exception))
        self.assertIn('alpha', str(caught.exception))


class MonopolyTest(SimpleTestCase):
    """
    TestCase for solve_monopoly_price and elasticity
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_linear_closed_form(self):
        """
        a=100, b=1, c=20 gives p=60, Q=40
        """
        outcome = solve_monopoly_price(self.demand, 20.0)
        self.assertEquals(outcome.billed_price, 60.0)
        self.assertEquals(outcome.quantity, 40.0)
        self.assertEquals(outcome.regime, Regime.NO_SUBSIDY)

    def test_zero_cost(self):
        """
        a=2, b=1, c=0 gives p = a / 2b = 1
        """
        self.assertEquals(solve_monopoly_price(LinearDemand(2.0, 1.0), 0.0).billed_price, 1.0)

    def test_exponential_demand(self):
        """
        D = exp(-p), c = 2 gives p = 3
        """
        outcome = solve_monopoly_price(self.exponential, 2.0)
        self.assertAlmostEqual(outcome.billed_price, 3.0, places=9)
        self.assertAlmostEqual(lerner_residual(self.exponential, outcome, 2.0), 0.0, places=8)

    def test_grid_oracle(self):
        """
        Closed form agrees with a 1e-4 grid maximization of (p-20)(100-p)
        """
        grid = np.arange(20.0, 100.0, 1e-4)
        best = grid[np.argmax((grid - 20) * (100 - grid))]
        self.assertAlmostEqual(solve_monopoly_price(self.demand, 20.0).billed_price, best, places=3)

    def test_nonpositive_quantity(self):
        """
        a <= b c has no positive quantity
        """
        with self.assertRaises(NonpositiveQuantity):
            solve_monopoly_price(LinearDemand(10.0, 1.0), 10.0)

    def test_no_bracket(self):
        """
        Profit increasing over the whole support cannot be bracketed
        """
        demand = GeneralDemand(lambda p: 1 / (1 + p), lambda p: -1 / (1 + p) ** 2, (0.0, 10.0))
        with self.assertRaises(NoBracket):
            solve_monopoly_price(demand, 0.5)

    def test_elasticity(self):
        """
        Linear midpoint elasticity 1, zero at p = 0, exponential demand equals p
        """
        self.assertAlmostEqual(elasticity(self.demand, 50.0), 1.0)
        self.assertEquals(elasticity(self.demand, 0.0), 0.0)
        numeric = GeneralDemand(lambda p: math.exp(-p), support_hint=(0.0, 50.0))
        self.assertAlmostEqual(elasticity(numeric, 3.0), 3.0, places=5)

    def test_zero_demand(self):
        """
        Elasticity is undefined beyond the choke price
        """
        with self.assertRaises(ZeroDemand):
            elasticity(self.demand, 120.0)


class PriceCapTest(SimpleTestCase):
    """
    TestCase for cap_binds and solve_price_cap
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_cap_below_monopoly_binds(self):
        """
        pbar = 40 < p_no = 60 binds
        """
        self.assertTrue(cap_binds(self.demand, self.params))

    def test_strict_enforcement_kills_rent(self):
        """
        pbar = 70 with alpha gamma = 1e9 does not bind
        """
        params = MarketParams(c=20.0, pbar=70.0, alpha=1.0, gamma=1e9)
        self.assertFalse(cap_binds(self.demand, params))

    def test_weak_enforcement_binds_above_monopoly_price(self):
        """
        pbar = 70 with alpha = gamma = 0.01: the insulation rent makes the cap regime more profitable
        """
        params = MarketParams(c=20.0, pbar=70.0, alpha=0.01, gamma=0.01)
        self.assertTrue(cap_binds(self.demand, params))
        self.assertGreater(insulation_rent(self.demand, params), 1600.0)

    def test_cap_equilibrium(self):
        """
        a=100, b=1, c=20, pbar=40, alpha=0.5, gamma=3 gives p=80, G=2400, E=2400
        """
        outcome = solve_price_cap(self.demand, self.params)
        self.assertAlmostEqual(outcome.billed_price, 80.0)
        self.assertAlmostEqual(outcome.government_outlay, 2400.0)
        self.assertAlmostEqual(outcome.expenditure, 2400.0)
        self.assertEquals(outcome.regime, Regime.CAP_BINDING)
        self.assertEquals(outcome.quantity, self.demand.quantity(40.0))

    def test_first_order_condition_exact(self):
        """
        D(pbar) - alpha gamma (p - pbar) = 0
        """
        outcome = solve_price_cap(self.demand, self.params)
        self.assertAlmostEqual(60.0 - 1.5 * (outcome.billed_price - 40.0), 0.0, places=12)

    def test_enforcement_limit(self):
        """
        alpha gamma = 1e9 pins the billed price to the cap
        """
        params = MarketParams(c=20.0, pbar=40.0, alpha=1.0, gamma=1e9)
        self.assertLess(abs(solve_price_cap(self.demand, params).billed_price - 40.0), 1e-6)

    def test_outlay_doubles_when_enforcement_halves(self):
        """
        G = D(pbar)^2 / (alpha gamma)
        """
        strict = solve_price_cap(self.demand, MarketParams(c=20.0, pbar=40.0, alpha=0.5, gamma=3.0))
        weak = solve_price_cap(self.demand, MarketParams(c=20.0, pbar=40.0, alpha=0.5, gamma=1.5))
        self.assertAlmostEqual(weak.government_outlay, 2 * strict.government_outlay)

    def test_monotone_in_enforcement(self):
        """
        The cap price falls with alpha and with gamma
        """
        prices = [solve_price_cap(self.demand, MarketParams(c=20.0, pbar=40.0, alpha=a, gamma=g)).billed_price
                  for a, g in [(0.2, 1.0), (0.4, 1.0), (0.4, 2.0)]]
        self.assertGreater(prices[0], prices[1])
        self.assertGreater(prices[1], prices[2])

    def test_slack_cap_is_reported(self):
        """
        A non-binding cap returns the unconstrained outcome tagged CapSlack
        """
        outcome = solve_price_cap(self.demand, MarketParams(c=20.0, pbar=70.0, alpha=1.0, gamma=1e9))
        self.assertEquals(outcome.regime, Regime.CAP_SLACK)
        self.assertIn('cap_slack', outcome.flags)
        self.assertEquals(outcome.billed_price, 60.0)


class AdValoremTest(SimpleTestCase):
    """
    TestCase for solve_ad_valorem and critical_tau
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_ad_valorem_equilibrium(self):
        """
        tau = 0.65 gives p_c = 53.5, Q = 46.5, p = 152.857, G = 4620.11
        """
        outcome = solve_ad_valorem(self.demand, self.params)
        self.assertAlmostEqual(outcome.consumer_price, 53.5)
        self.assertAlmostEqual(outcome.quantity, 46.5)
        self.assertAlmostEqual(outcome.billed_price, 152.857142857, places=6)
        self.assertAlmostEqual(outcome.government_outlay, 4620.107142857, places=5)
        self.assertAlmostEqual(outcome.billed_price * outcome.quantity,
                               outcome.expenditure + outcome.government_outlay)

    def test_rate_limits(self):
        """
        tau -> 0 gives p_no = 60; tau -> 1 gives a / 2b = 50
        """
        low = solve_ad_valorem(self.demand, MarketParams(c=20.0, tau=1e-9))
        high = solve_ad_valorem(self.demand, MarketParams(c=20.0, tau=1 - 1e-9))
        self.assertAlmostEqual(low.consumer_price, 60.0, places=6)
        self.assertAlmostEqual(high.consumer_price, 50.0, places=6)

    def test_consumer_price_decreasing_in_rate(self):
        """
        p_c strictly decreases in tau, also on the numeric path
        """
        for demand in (self.demand, self.exponential):
            prices = [solve_ad_valorem(demand, MarketParams(c=2.0, tau=t)).consumer_price for t in (0.2, 0.5, 0.8)]
            self.assertTrue(prices[0] > prices[1] > prices[2])

    def test_critical_rate(self):
        """
        pbar = 55 gives tau* = 0.5, matching 2 (60 - 55) / 20
        """
        critical = critical_tau(self.demand, 20.0, 55.0)
        self.assertEquals(critical.status, CriticalStatus.INTERIOR)
        self.assertAlmostEqual(critical.tau_star, 0.5, places=9)
        self.assertAlmostEqual(critical.linear_tau_star, 0.5)

    def test_critical_rate_at_monopoly_price(self):
        """
        pbar = p_no gives tau* = 0
        """
        self.assertEquals(critical_tau(self.demand, 20.0, 60.0).tau_star, 0.0)

    def test_no_interior_solution(self):
        """
        pbar = p_no - c/2 = 50: no tau in (0,1) induces switching
        """
        critical = critical_tau(self.demand, 20.0, 50.0)
        self.assertEquals(critical.status, CriticalStatus.NO_INTERIOR_SOLUTION)
        self.assertIsNone(critical.tau_star)

    def test_cap_not_binding(self):
        """
        pbar above p_no is an error
        """
        with self.assertRaises(CapNotBinding):
            critical_tau(self.demand, 20.0, 65.0)

    @settings(max_examples=150, deadline=None)
    @given(admissible_markets())
    def test_closed_forms_match_numeric_path(self, market):
        """
        Linear closed forms equal the general-demand solutions within 1e-8 relative
        """
        demand, params = market
        general = demand.as_general()
        forms = closed_forms(demand, params)
        checks = [
            (solve_monopoly_price(general, params.c).billed_price, forms['p_no']),
            (solve_price_cap(general, params).billed_price, forms['p_cap']),
            (solve_price_cap(general, params).government_outlay, forms['g_cap']),
            (solve_ad_valorem(general, params).consumer_price, forms['p_c_adv']),
            (solve_ad_valorem(general, params).government_outlay, forms['g_adv']),
        ]
        for numeric, closed in checks:
            self.assertLess(abs(numeric - closed), 1e-8 * max(1.0, abs(closed)))
        self.assertLess(abs(critical_tau(general, params.c, params.pbar).tau_star - forms['tau_star']), 1e-8)

    @settings(max_examples=100, deadline=None)
    @given(admissible_markets())
    def test_effective_marginal_cost_identity(self, market):
        """
        Ad valorem consumer price equals the monopoly price at c (1 - tau)
        """
        demand, params = market
        self.assertEquals(solve_ad_valorem(demand, params).consumer_price,
                          solve_monopoly_price(demand, params.c * (1 - params.tau)).billed_price)


class ConsortiumTest(SimpleTestCase):
    """
    TestCase for consortium_optimum and consortium_from_markets
    """

    def test_peak(self):
        """
        alpha gamma B = 1, R = 1: kappa* = 2 at the peak R* = 1
        """
        outcome = consortium_optimum(ConsortiumParams(B=1.0, R=1.0))
        self.assertEquals(outcome.kappa_star, 2.0)
        self.assertEquals(outcome.peak_ratio, 1.0)
        self.assertEquals(outcome.regime, ConsortiumRegime.ENFORCEMENT_INTERIOR)

    def test_both_branches(self):
        """
        R = 0.5 is feasibility bound, R = 2 is enforcement interior, both at 1.5
        """
        low = consortium_optimum(ConsortiumParams(B=1.0, R=0.5))
        high = consortium_optimum(ConsortiumParams(B=1.0, R=2.0))
        self.assertEquals((low.kappa_star, low.regime), (1.5, ConsortiumRegime.FEASIBILITY_BOUND))
        self.assertEquals((high.kappa_star, high.regime), (1.5, ConsortiumRegime.ENFORCEMENT_INTERIOR))

    def test_no_ineligible_revenue(self):
        """
        R = 0 gives no distortion; small R gives kappa* close to 1
        """
        self.assertEquals(consortium_optimum(ConsortiumParams(B=1.0, R=0.0)).regime, ConsortiumRegime.NO_DISTORTION)
        self.assertAlmostEqual(consortium_optimum(ConsortiumParams(B=1.0, R=1e-9)).kappa_star, 1.0)

    def test_zero_sum_transfer(self):
        """
        delta_C = B (kappa - 1) = delta_G
        """
        outcome = consortium_optimum(ConsortiumParams(B=3.0, R=0.2, alpha=0.5, gamma=0.4))
        self.assertEquals(outcome.delta_C, outcome.delta_G)
        self.assertEquals(outcome.delta_C, 3.0 * (outcome.kappa_star - 1))

    def test_hump_shape(self):
        """
        kappa*(R) rises up to R* and falls after it
        """
        ratios = np.linspace(0.05, 20, 400)
        curve = kappa_curve(1.0, 1.0, 1.0, ratios)
        rising = curve[ratios <= 1.0]
        falling = curve[ratios >= 1.0]
        self.assertTrue(np.all(np.diff(rising) >= 0))
        self.assertTrue(np.all(np.diff(falling) <= 0))

    def test_grid_maximization_agrees(self):
        """
        Maximizing the objective over [1, 1+R] agrees with the min formula within 1e-8
        """
        for ratio in (0.05, 0.3, 1.0, 2.5, 20.0):
            params = ConsortiumParams(B=1.0, R=ratio)
            grid = np.linspace(1, 1 + ratio, 20001)
            coarse = grid[np.argmax(consortium_objective(params, grid))]
            step = grid[1] - grid[0]
            low, high = max(1.0, coarse - step), min(1 + ratio, coarse + step)
            best = polish_root(lambda k: consortium_objective_slope(params, k), low, high, coarse)
            self.assertLess(abs(best - consortium_optimum(params).kappa_star), 1e-8)

    def test_symmetric_small_rate(self):
        """
        Identical markets with tau -> 0: R -> 1 and B -> 0
        """
        demand = LinearDemand(100.0, 1.0)
        outcome = consortium_from_markets(demand, demand, 20.0, 1e-4, 1.0, 1.0)
        self.assertAlmostEqual(outcome.R, 1.0, delta=1e-2)
        self.assertLess(outcome.B, 1.0)

    def test_revenue_neutral_reallocation(self):
        """
        Identical markets at tau = 0.65: total revenue unchanged, delta_C equal on both sides
        """
        demand = LinearDemand(100.0, 1.0)
        outcome = consortium_from_markets(demand, demand, 20.0, 0.65, 1.0, 1.0)
        before = outcome.p_E * outcome.Q_E + outcome.p_I * outcome.Q_I
        after = outcome.tilde_p_E * outcome.Q_E + outcome.tilde_p_I * outcome.Q_I
        self.assertAlmostEqual(before, after, places=6)
        self.assertAlmostEqual(outcome.delta_C, outcome.delta_C_ineligible, places=6)
        self.assertGreaterEqual(outcome.tilde_p_I, 0.0)
        self.assertGreaterEqual(outcome.tilde_p_E, outcome.p_E)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.5, 3.0), st.floats(1e-5, 1.0), st.floats(0.01, 1.0))
    def test_kappa_within_feasible_range(self, tau, scale, gamma, alpha):
        """
        1 <= kappa* <= 1 + R and the reallocated ineligible price is non-negative
        """
        outcome = consortium_from_markets(LinearDemand(100.0, 1.0), LinearDemand(100.0 * scale, 1.0),
                                          20.0, tau, alpha, gamma)
        self.assertTrue(1 <= outcome.kappa_star <= 1 + outcome.R + 1e-12)
        self.assertGreaterEqual(outcome.tilde_p_I, 0.0)


class DominanceTest(SimpleTestCase):
    """
    TestCase for dominance_report
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    def test_reference_case(self):
        """
        a=100, b=1, c=20, pbar=55, tau=0.65, alpha=0.5, gamma=3: all four parts pass
        """
        params = MarketParams(c=20.0, pbar=55.0, tau=0.65, alpha=0.5, gamma=3.0)
        report = dominance_report(self.demand, params)
        self.assertTrue(report.all_hold)
        self.assertAlmostEqual(report.tau_star, 0.5, places=9)
        self.assertAlmostEqual(report.enforcement_threshold, 45.0 ** 2 / report.ad_valorem.government_outlay,
                               places=6)

    def test_equality_at_critical_rate(self):
        """
        tau = tau* makes part i hold with equality
        """
        params = MarketParams(c=20.0, pbar=55.0, tau=0.5, alpha=0.5, gamma=3.0)
        check = dominance_report(self.demand, params).check('i')
        self.assertTrue(check.holds)
        self.assertAlmostEqual(check.lhs, check.rhs, places=9)

    def test_rate_below_critical(self):
        """
        tau < tau* is a failed precondition
        """
        with self.assertRaises(PreconditionUnmet) as caught:
            dominance_report(self.demand, MarketParams(c=20.0, pbar=55.0, tau=0.3, alpha=0.5, gamma=3.0))
        self.assertIn('tau >= tau*', caught.exception.failed[0])

    @settings(max_examples=200, deadline=None)
    @given(admissible_markets())
    def test_price_and_quantity_parts_always_hold(self, market):
        """
        Parts i and ii hold on every admissible draw; part iii whenever demand is inelastic
        """
        demand, params = market
        report = dominance_report(demand, params)
        self.assertTrue(report.check('i').holds)
        self.assertTrue(report.check('ii').holds)
        self.assertTrue(report.check('iii').holds)
        self.assertTrue(report.check('iv').holds)
