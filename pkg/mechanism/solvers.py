"""
Monopoly equilibria under no subsidy, a price cap and an ad valorem subsidy.

Linear demand uses closed forms; any other DemandSpec goes through a
golden-section search on profit, polished on the first-order condition.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from primitives.optimize import GRID_POINTS, bisect_root, golden_section_maximize, polish_root

from .demand import EquilibriumOutcome, LinearDemand, Regime
from .exceptions import CapNotBinding, InvalidParameters, NonpositiveQuantity, ZeroDemand

logger = logging.getLogger(__name__)

PRICE_TOLERANCE = 1e-10
TAU_TOLERANCE = 1e-10
TAU_UPPER = 1 - 1e-9


def _general_monopoly_price(demand, c):
    low, high = demand.support
    low = max(low, c)
    if high <= low:
        raise NonpositiveQuantity('support {0} lies below marginal cost {1}'.format(demand.support, c))

    def profit(p):
        return (p - c) * demand.quantity(p)

    p = golden_section_maximize(profit, low, high, tol=PRICE_TOLERANCE)
    if profit(p) <= 0:
        raise NonpositiveQuantity('no price above marginal cost {0} earns positive profit'.format(c))

    def foc(x):
        return demand.quantity(x) + (x - c) * demand.slope(x)

    step = (high - low) / (GRID_POINTS - 1)
    return polish_root(foc, max(low, p - step), min(high, p + step), p)


def solve_monopoly_price(demand, c):
    """
    Unsubsidized monopoly price solving D(p) + (p - c) D'(p) = 0.
    :param demand: DemandSpec
    :param c: marginal cost
    :return: EquilibriumOutcome tagged NoSubsidy
    """
    if not c >= 0:
        raise InvalidParameters('marginal cost must be >= 0, got {0}'.format(c))
    if isinstance(demand, LinearDemand):
        if demand.a <= demand.b * c:
            raise NonpositiveQuantity('a <= b c ({0} <= {1}): no positive quantity at marginal cost'.format(
                demand.a, demand.b * c))
        price = (demand.a / demand.b + c) / 2
    else:
        price = _general_monopoly_price(demand, c)
    quantity = demand.quantity(price)
    if quantity <= 0:
        raise NonpositiveQuantity('monopoly quantity is not positive at p={0}'.format(price))
    return EquilibriumOutcome(price, price, quantity, price * quantity, 0.0, (price - c) * quantity,
                              Regime.NO_SUBSIDY)


def elasticity(demand, price):
    """
    Price elasticity -p D'(p) / D(p).
    """
    quantity = demand.quantity(price)
    if quantity <= 0:
        raise ZeroDemand('demand is zero at p={0}'.format(price))
    return -price * demand.slope(price) / quantity


def lerner_residual(demand, outcome, c):
    """
    (p - c) / p - 1 / elasticity at an unsubsidized optimum; zero at the solution.
    """
    p = outcome.billed_price
    return (p - c) / p - 1 / elasticity(demand, p)


def insulation_rent(demand, params):
    """
    Overbilling profit D(pbar)^2 / (2 alpha gamma) available under a binding cap.
    """
    return demand.quantity(params.pbar) ** 2 / (2 * params.enforcement)


def _cap_solution(demand, params):
    quantity = demand.quantity(params.pbar)
    margin = params.penalty.inverse_marginal(quantity / params.alpha)
    price = params.pbar + margin
    profit = (price - params.c) * quantity - params.alpha * params.penalty.value(margin)
    return price, quantity, margin, profit


def cap_binds(demand, params):
    """
    Whether the provider prices under the cap regime: always when pbar is below
    the monopoly price, otherwise when the cap profit including the insulation
    rent beats the unconstrained monopoly profit.
    """
    monopoly = solve_monopoly_price(demand, params.c)
    if params.pbar < monopoly.billed_price:
        return True
    return _cap_solution(demand, params)[3] > monopoly.profit


def solve_price_cap(demand, params):
    """
    Price-cap equilibrium p = pbar + D(pbar) / (alpha gamma).
    When the cap does not bind the unconstrained outcome is returned tagged CapSlack.
    :param demand: DemandSpec
    :param params: MarketParams
    :return: EquilibriumOutcome
    """
    if not cap_binds(demand, params):
        logger.warning('price cap %.6g does not bind; returning the unconstrained outcome', params.pbar)
        monopoly = solve_monopoly_price(demand, params.c)
        return replace(monopoly, regime=Regime.CAP_SLACK, flags=('cap_slack',))
    price, quantity, margin, profit = _cap_solution(demand, params)
    return EquilibriumOutcome(price, params.pbar, quantity, params.pbar * quantity, margin * quantity, profit,
                              Regime.CAP_BINDING)


def solve_ad_valorem(demand, params):
    """
    Ad valorem equilibrium. The consumer price equals the monopoly price at the
    effective marginal cost c (1 - tau); the billed price is p_c / (1 - tau).
    :param demand: DemandSpec
    :param params: MarketParams
    :return: EquilibriumOutcome tagged AdValorem
    """
    tau = params.tau
    effective = solve_monopoly_price(demand, params.c * (1 - tau))
    consumer_price = effective.billed_price
    quantity = effective.quantity
    price = consumer_price / (1 - tau)
    return EquilibriumOutcome(price, consumer_price, quantity, consumer_price * quantity, tau * price * quantity,
                              (price - params.c) * quantity, Regime.AD_VALOREM)


class CriticalStatus(str, Enum):
    INTERIOR = 'Interior'
    AT_MONOPOLY_PRICE = 'AtMonopolyPrice'
    NO_INTERIOR_SOLUTION = 'NoInteriorSolution'


@dataclass(frozen=True)
class CriticalRate:
    tau_star: Optional[float]
    status: CriticalStatus
    linear_tau_star: Optional[float] = None

    @property
    def exists(self):
        return self.tau_star is not None


def critical_tau(demand, c, pbar):
    """
    Subsidy rate at which the ad valorem consumer price equals the cap.
    :param demand: DemandSpec
    :param c: marginal cost
    :param pbar: price cap
    :return: CriticalRate; status NoInteriorSolution when pbar <= p_no(0)
    """
    monopoly_price = solve_monopoly_price(demand, c).billed_price
    tolerance = 1e-12 * max(1.0, monopoly_price)
    if pbar > monopoly_price + tolerance:
        raise CapNotBinding('cap {0} is above the monopoly price {1}'.format(pbar, monopoly_price))
    linear = 2 * (monopoly_price - pbar) / c if isinstance(demand, LinearDemand) and c > 0 else None
    if abs(pbar - monopoly_price) <= tolerance:
        return CriticalRate(0.0, CriticalStatus.AT_MONOPOLY_PRICE, linear)
    if pbar <= solve_monopoly_price(demand, 0.0).billed_price:
        return CriticalRate(None, CriticalStatus.NO_INTERIOR_SOLUTION, None)

    def gap(tau):
        return solve_monopoly_price(demand, c * (1 - tau)).billed_price - pbar

    tau_star = bisect_root(gap, 0.0, TAU_UPPER, tol=TAU_TOLERANCE)
    if linear is not None and abs(tau_star - linear) > 1e-8:
        logger.warning('bisected tau* %.12g differs from the linear closed form %.12g', tau_star, linear)
    return CriticalRate(tau_star, CriticalStatus.INTERIOR, linear)


def closed_forms(demand, params):
    """
    Linear-demand closed forms of every equilibrium object.
    :param demand: LinearDemand
    :param params: MarketParams
    :return: dict
    """
    if not isinstance(demand, LinearDemand):
        raise InvalidParameters('closed forms exist for linear demand only')
    a, b = demand.a, demand.b
    c, pbar, tau, enforcement = params.c, params.pbar, params.tau, params.enforcement
    p_no = (a / b + c) / 2
    cap_quantity = a - b * pbar
    p_c_adv = (a / b + c * (1 - tau)) / 2
    p_adv = p_c_adv / (1 - tau)
    q_adv = a - b * p_c_adv
    return {
        'p_no': p_no,
        'q_no': a - b * p_no,
        'p_cap': pbar + cap_quantity / enforcement,
        'g_cap': cap_quantity ** 2 / enforcement,
        'p_c_adv': p_c_adv,
        'p_adv': p_adv,
        'g_adv': tau * p_adv * q_adv,
        'tau_star': 2 * (p_no - pbar) / c if c > 0 else None,
    }
