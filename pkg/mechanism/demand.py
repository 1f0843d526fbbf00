"""
Demand curves, market parameters and the audit penalty.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .exceptions import InvalidParameters, NonMonotoneDemand

MONOTONICITY_GRID = 201


class DemandSpec(ABC):
    """
    A strictly decreasing demand curve D(p).
    """
    kind = None

    @abstractmethod
    def quantity(self, price):
        pass

    @abstractmethod
    def slope(self, price):
        pass

    @property
    @abstractmethod
    def support(self):
        """
        Price interval on which the curve is searched, as (low, high).
        """


@dataclass(frozen=True)
class LinearDemand(DemandSpec):
    """
    D(p) = a - b p, truncated at zero beyond the choke price a / b.
    """
    a: float
    b: float
    kind = 'linear'

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidParameters('linear demand needs a > 0 and b > 0, got a={0}, b={1}'.format(self.a, self.b))

    @property
    def choke_price(self):
        return self.a / self.b

    @property
    def support(self):
        return 0.0, self.choke_price

    def quantity(self, price):
        if np.ndim(price):
            return np.maximum(self.a - self.b * np.asarray(price, dtype=float), 0.0)
        return max(self.a - self.b * float(price), 0.0)

    def slope(self, price):
        if np.ndim(price):
            return np.where(np.asarray(price) < self.choke_price, -self.b, 0.0)
        return -self.b if float(price) < self.choke_price else 0.0

    def as_general(self):
        """
        The same curve behind the numeric solver path.
        """
        return GeneralDemand(self.quantity, self.slope, self.support)


@dataclass(frozen=True)
class GeneralDemand(DemandSpec):
    """
    Demand given by callables.
    :param evaluator: price -> quantity
    :param derivative: price -> dD/dp; a central difference is used when omitted
    :param support_hint: (low, high) price interval bracketing the relevant prices
    """
    evaluator: Callable
    derivative: Optional[Callable] = None
    support_hint: tuple = (0.0, 100.0)
    kind = 'general'

    def __post_init__(self):
        low, high = self.support_hint
        if not (math.isfinite(low) and math.isfinite(high) and high > low):
            raise InvalidParameters('support_hint must be a finite interval, got {0}'.format(self.support_hint))
        grid = np.linspace(low, high, MONOTONICITY_GRID)
        values = np.array([float(self.evaluator(p)) for p in grid])
        positive = values[:-1] > 0
        if np.any(positive & ~(values[:-1] > values[1:])):
            where = grid[:-1][positive & ~(values[:-1] > values[1:])][0]
            raise NonMonotoneDemand('demand is not strictly decreasing near p={0:.6g}'.format(where))

    @property
    def support(self):
        return tuple(self.support_hint)

    def quantity(self, price):
        return float(self.evaluator(price))

    def slope(self, price):
        if self.derivative is not None:
            return float(self.derivative(price))
        step = 1e-6 * max(1.0, abs(price))
        return (self.quantity(price + step) - self.quantity(price - step)) / (2 * step)


class Penalty(ABC):
    """
    Convex audit penalty on the overbilling margin delta = p - pbar.
    """

    @abstractmethod
    def value(self, delta):
        pass

    @abstractmethod
    def marginal(self, delta):
        pass

    @abstractmethod
    def inverse_marginal(self, marginal):
        pass


@dataclass(frozen=True)
class QuadraticPenalty(Penalty):
    gamma: float

    def value(self, delta):
        return self.gamma / 2 * delta ** 2

    def marginal(self, delta):
        return self.gamma * delta

    def inverse_marginal(self, marginal):
        return marginal / self.gamma


@dataclass(frozen=True)
class MarketParams:
    """
    Mechanism environment.
    :param c: marginal cost, >= 0
    :param pbar: price cap, > 0 (infinite when no cap applies)
    :param tau: ad valorem subsidy rate in (0, 1)
    :param alpha: audit probability in (0, 1]
    :param gamma: penalty curvature, > 0
    """
    c: float
    pbar: float = math.inf
    tau: float = 0.65
    alpha: float = 1.0
    gamma: float = 1.0
    penalty: Penalty = field(default=None, compare=False)

    def __post_init__(self):
        problems = []
        if not (self.c >= 0 and math.isfinite(self.c)):
            problems.append('c must be >= 0')
        if not self.pbar > 0:
            problems.append('pbar must be > 0')
        if not 0 < self.tau < 1:
            problems.append('tau must lie in (0, 1)')
        if not 0 < self.alpha <= 1:
            problems.append('alpha must lie in (0, 1]')
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            problems.append('gamma must be > 0')
        if problems:
            raise InvalidParameters('; '.join(problems))
        if self.penalty is None:
            object.__setattr__(self, 'penalty', QuadraticPenalty(self.gamma))

    @property
    def enforcement(self):
        return self.alpha * self.gamma


class Regime(str, Enum):
    NO_SUBSIDY = 'NoSubsidy'
    CAP_BINDING = 'CapBinding'
    CAP_SLACK = 'CapSlack'
    AD_VALOREM = 'AdValorem'


@dataclass(frozen=True)
class EquilibriumOutcome:
    billed_price: float
    consumer_price: float
    quantity: float
    expenditure: float
    government_outlay: float
    profit: float
    regime: Regime
    flags: tuple = ()

    def as_dict(self):
        return {
            'billed_price': self.billed_price, 'consumer_price': self.consumer_price,
            'quantity': self.quantity, 'expenditure': self.expenditure,
            'government_outlay': self.government_outlay, 'profit': self.profit,
            'regime': self.regime.value, 'flags': list(self.flags),
        }
