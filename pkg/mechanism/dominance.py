"""
Pairwise comparison of the ad valorem mechanism against a binding price cap.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from primitives.exceptions import NoBracket
from primitives.optimize import bisect_root

from .exceptions import CapNotBinding, PreconditionUnmet
from .solvers import cap_binds, critical_tau, elasticity, solve_ad_valorem, solve_price_cap

logger = logging.getLogger(__name__)

ELASTICITY_POINTS = 101
ENFORCEMENT_SEARCH = (math.log(1e-12), math.log(1e12))


@dataclass(frozen=True)
class DominanceCheck:
    """
    One comparison. ``applicable`` is False when its hypothesis fails, in which
    case the statement holds vacuously.
    """
    part: str
    statement: str
    holds: bool
    lhs: float
    rhs: float
    applicable: bool = True
    detail: str = ''


@dataclass
class DominanceReport:
    tau_star: float
    cap: object
    ad_valorem: object
    checks: list = field(default_factory=list)
    enforcement_threshold: Optional[float] = None

    @property
    def all_hold(self):
        return all(check.holds for check in self.checks)

    def check(self, part):
        return next(check for check in self.checks if check.part == part)

    def records(self):
        return [check.__dict__ for check in self.checks]


def _cap_outlay(demand, params, enforcement):
    return solve_price_cap(demand, replace(params, gamma=enforcement / params.alpha, penalty=None)).government_outlay


def enforcement_threshold(demand, params, outlay):
    """
    alpha * gamma below which the cap outlay exceeds ``outlay``, by bisection on log(alpha gamma).
    :return: threshold, or None when the cap outlay never exceeds ``outlay`` on [1e-12, 1e12]
    """
    def gap(log_enforcement):
        return _cap_outlay(demand, params, math.exp(log_enforcement)) - outlay

    low, high = ENFORCEMENT_SEARCH
    if gap(low) <= 0:
        return None
    if gap(high) > 0:
        return math.exp(high)
    try:
        return math.exp(bisect_root(gap, low, high, tol=1e-12))
    except NoBracket:
        return None


def dominance_report(demand, params, tolerance=1e-9):
    """
    Compare the ad valorem equilibrium against the binding cap.
    :param demand: DemandSpec
    :param params: MarketParams with tau >= tau*
    :param tolerance: relative slack on the weak inequalities
    :return: DominanceReport with parts i-iv
    """
    failed = []
    if not cap_binds(demand, params):
        failed.append('cap binds')
    try:
        critical = critical_tau(demand, params.c, params.pbar)
    except CapNotBinding:
        failed.append('cap below the monopoly price')
        critical = None
    if critical is not None and not critical.exists:
        failed.append('interior critical subsidy rate exists')
    elif critical is not None and params.tau < critical.tau_star - 1e-9:
        failed.append('tau >= tau* ({0:.6g} < {1:.6g})'.format(params.tau, critical.tau_star))
    if failed:
        raise PreconditionUnmet(failed)

    cap = solve_price_cap(demand, params)
    adv = solve_ad_valorem(demand, params)
    report = DominanceReport(tau_star=critical.tau_star, cap=cap, ad_valorem=adv)

    slack = tolerance * max(1.0, params.pbar)
    report.checks.append(DominanceCheck(
        'i', 'consumer price under ad valorem <= cap', adv.consumer_price <= params.pbar + slack,
        adv.consumer_price, params.pbar))
    report.checks.append(DominanceCheck(
        'ii', 'quantity under ad valorem >= quantity under cap',
        adv.quantity >= cap.quantity - tolerance * max(1.0, cap.quantity), adv.quantity, cap.quantity))

    low, high = sorted((adv.consumer_price, params.pbar))
    inelastic = all(elasticity(demand, p) <= 1 + 1e-12 for p in np.linspace(low, high, ELASTICITY_POINTS))
    expenditure_ok = adv.expenditure <= cap.expenditure + tolerance * max(1.0, cap.expenditure)
    report.checks.append(DominanceCheck(
        'iii', 'expenditure under ad valorem <= expenditure under cap when demand is inelastic',
        expenditure_ok or not inelastic, adv.expenditure, cap.expenditure, applicable=inelastic,
        detail='' if inelastic else 'demand is elastic somewhere on [p_c_adv, pbar]'))

    threshold = enforcement_threshold(demand, params, adv.government_outlay)
    report.enforcement_threshold = threshold
    if threshold is not None:
        below = _cap_outlay(demand, params, threshold / 2)
        holds = below > adv.government_outlay
    else:
        holds = False
    at_params = adv.government_outlay < cap.government_outlay
    report.checks.append(DominanceCheck(
        'iv', 'outlay under ad valorem < outlay under cap for small alpha gamma', holds,
        adv.government_outlay, cap.government_outlay,
        detail='threshold alpha*gamma={0}; holds at given parameters: {1}'.format(
            'none' if threshold is None else '{0:.6g}'.format(threshold), at_params)))
    return report
