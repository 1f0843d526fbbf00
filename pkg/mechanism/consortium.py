"""
Cross-subsidization inside a consortium of eligible and ineligible members.

The provider inflates eligible bills by the distortion ratio kappa and returns
the extra revenue to ineligible members, keeping total revenue unchanged.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .demand import MarketParams
from .exceptions import InvalidParameters, RevenueNeutralityViolation
from .solvers import solve_ad_valorem, solve_monopoly_price

logger = logging.getLogger(__name__)

NEUTRALITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ConsortiumParams:
    """
    :param B: eligible subsidy base tau * p_E * Q_E, > 0
    :param R: ineligible-to-eligible revenue ratio, >= 0
    :param alpha: audit probability in (0, 1]
    :param gamma: penalty curvature, > 0
    """
    B: float
    R: float
    alpha: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise InvalidParameters('subsidy base B must be > 0, got {0}'.format(self.B))
        if not (self.R >= 0 and math.isfinite(self.R)):
            raise InvalidParameters('revenue ratio R must be >= 0, got {0}'.format(self.R))
        if not 0 < self.alpha <= 1:
            raise InvalidParameters('alpha must lie in (0, 1]')
        if not self.gamma > 0:
            raise InvalidParameters('gamma must be > 0')

    @property
    def enforcement(self):
        """
        alpha * gamma * B
        """
        return self.alpha * self.gamma * self.B

    @property
    def peak_ratio(self):
        return 1 / math.sqrt(self.enforcement)


class ConsortiumRegime(str, Enum):
    FEASIBILITY_BOUND = 'FeasibilityBound'
    ENFORCEMENT_INTERIOR = 'EnforcementInterior'
    NO_DISTORTION = 'NoDistortion'


@dataclass(frozen=True)
class ConsortiumOutcome:
    kappa_star: float
    regime: ConsortiumRegime
    delta_C: float
    delta_G: float
    B: float
    R: float
    peak_ratio: float
    objective: float
    tilde_p_E: Optional[float] = None
    tilde_p_I: Optional[float] = None
    p_E: Optional[float] = None
    p_I: Optional[float] = None
    Q_E: Optional[float] = None
    Q_I: Optional[float] = None
    delta_C_ineligible: Optional[float] = None

    def as_dict(self):
        out = dict(self.__dict__)
        out['regime'] = self.regime.value
        return out


def consortium_objective(params, kappa):
    """
    Cost reduction minus expected penalty: B kappa - (alpha gamma R / 2) B^2 (kappa - 1)^2.
    """
    return params.B * kappa - params.alpha * params.gamma * params.R / 2 * params.B ** 2 * (kappa - 1) ** 2


def consortium_objective_slope(params, kappa):
    return params.B - params.alpha * params.gamma * params.R * params.B ** 2 * (kappa - 1)


def consortium_optimum(params):
    """
    Optimal distortion kappa* = min(1 + R, 1 + 1 / (alpha gamma B R)).
    :param params: ConsortiumParams
    :return: ConsortiumOutcome
    """
    if params.R == 0:
        kappa, regime = 1.0, ConsortiumRegime.NO_DISTORTION
    else:
        feasible = 1 + params.R
        interior = 1 + 1 / (params.enforcement * params.R)
        # branches meet at R*; the tie goes to the enforcement branch
        if params.R < params.peak_ratio:
            kappa, regime = feasible, ConsortiumRegime.FEASIBILITY_BOUND
        else:
            kappa, regime = min(feasible, interior), ConsortiumRegime.ENFORCEMENT_INTERIOR
    delta = params.B * (kappa - 1)
    return ConsortiumOutcome(kappa_star=kappa, regime=regime, delta_C=delta, delta_G=delta, B=params.B,
                             R=params.R, peak_ratio=params.peak_ratio,
                             objective=consortium_objective(params, kappa))


def kappa_curve(B, alpha, gamma, ratios):
    """
    kappa*(R) over a grid of revenue ratios.
    """
    return np.array([consortium_optimum(ConsortiumParams(B, float(r), alpha, gamma)).kappa_star for r in ratios])


def consortium_from_markets(demand_E, demand_I, c, tau, alpha, gamma):
    """
    Build (B, R) from separate eligible and ineligible markets, solve for kappa*
    and reconstruct the reallocated prices under revenue neutrality.
    :param demand_E: eligible members' demand, priced ad valorem
    :param demand_I: ineligible members' demand, priced as an unsubsidized monopoly
    :param c: marginal cost
    :param tau: subsidy rate
    :param alpha: audit probability
    :param gamma: penalty curvature
    :return: ConsortiumOutcome with reallocated prices
    """
    eligible = solve_ad_valorem(demand_E, MarketParams(c=c, tau=tau, alpha=alpha, gamma=gamma))
    ineligible = solve_monopoly_price(demand_I, c)
    p_E, Q_E = eligible.billed_price, eligible.quantity
    p_I, Q_I = ineligible.billed_price, ineligible.quantity
    revenue_E, revenue_I = p_E * Q_E, p_I * Q_I
    params = ConsortiumParams(B=tau * revenue_E, R=revenue_I / revenue_E, alpha=alpha, gamma=gamma)
    optimum = consortium_optimum(params)

    tilde_p_E = optimum.kappa_star * p_E
    tilde_p_I = p_I - (tilde_p_E - p_E) * Q_E / Q_I
    scale = revenue_E + revenue_I
    if tilde_p_I < -NEUTRALITY_TOLERANCE * max(1.0, p_I):
        raise RevenueNeutralityViolation('reallocated ineligible price is negative ({0})'.format(tilde_p_I))
    tilde_p_I = max(tilde_p_I, 0.0)
    if abs(tilde_p_E * Q_E + tilde_p_I * Q_I - scale) > NEUTRALITY_TOLERANCE * scale:
        raise RevenueNeutralityViolation('reallocation changes total provider revenue')
    delta_eligible = tau * (tilde_p_E - p_E) * Q_E
    delta_ineligible = tau * (p_I - tilde_p_I) * Q_I
    if abs(delta_eligible - delta_ineligible) > NEUTRALITY_TOLERANCE * max(1.0, abs(delta_eligible)):
        raise RevenueNeutralityViolation('cost reduction differs between the eligible and ineligible sides')

    return ConsortiumOutcome(
        kappa_star=optimum.kappa_star, regime=optimum.regime, delta_C=optimum.delta_C, delta_G=optimum.delta_G,
        B=params.B, R=params.R, peak_ratio=params.peak_ratio, objective=optimum.objective,
        tilde_p_E=tilde_p_E, tilde_p_I=tilde_p_I, p_E=p_E, p_I=p_I, Q_E=Q_E, Q_I=Q_I,
        delta_C_ineligible=delta_ineligible,
    )
