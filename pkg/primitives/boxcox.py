"""
Box-Cox profile likelihood for a price regressed on log speed.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .exceptions import DimensionMismatch, InputError, NonpositiveP, NonpositiveValues
from .optimize import golden_section_maximize

logger = logging.getLogger(__name__)

LAMBDA_BOUNDS = (-2.0, 2.0)


@dataclass
class BoxCoxResult:
    lambda_hat: float
    log_likelihood: float
    lr_log: float
    lr_linear: float
    p_log: float
    p_linear: float
    n: int

    def records(self):
        return [
            {'null': 'lambda=0 (log-log)', 'lr': self.lr_log, 'p_value': self.p_log},
            {'null': 'lambda=1 (linear)', 'lr': self.lr_linear, 'p_value': self.p_linear},
        ]


def boxcox_transform(values, lam):
    """
    (values**lam - 1) / lam, with the log limit at lam == 0.
    """
    logs = np.log(values)
    if lam == 0:
        return logs
    return np.expm1(lam * logs) / lam


class BoxCoxProfile:
    """
    Concentrated log-likelihood of P^(lambda) = a + b ln S + e, e ~ N(0, s^2),
    including the Jacobian term (lambda - 1) * sum(ln P).
    """

    def __init__(self, price, speed):
        price = np.asarray(price, dtype=float).ravel()
        speed = np.asarray(speed, dtype=float).ravel()
        if len(price) != len(speed):
            raise DimensionMismatch('price and speed differ in length')
        if len(price) < 3:
            raise InputError('Box-Cox profile needs at least 3 rows')
        if np.any(~np.isfinite(price)) or np.any(price <= 0):
            raise NonpositiveP('Box-Cox requires strictly positive prices')
        if np.any(~np.isfinite(speed)) or np.any(speed <= 0):
            raise NonpositiveValues('Box-Cox requires strictly positive speeds')
        self.price = price
        self.n = len(price)
        self.sum_log_price = float(np.log(price).sum())
        design = np.column_stack([np.ones(self.n), np.log(speed)])
        self._q = linalg.qr(design, mode='economic')[0]

    def __call__(self, lam):
        z = boxcox_transform(self.price, lam)
        resid = z - self._q @ (self._q.T @ z)
        sigma2 = float(resid @ resid) / self.n
        if sigma2 <= 0:
            return np.inf
        return -self.n / 2 * np.log(sigma2) + (lam - 1) * self.sum_log_price


def boxcox_profile(price, speed, bounds=LAMBDA_BOUNDS):
    """
    Maximize the Box-Cox profile likelihood over lambda and test the log (0)
    and linear (1) restrictions with chi-square(1) likelihood-ratio tests.
    :param price: positive outcome
    :param speed: positive regressor, entered as ln(speed)
    :param bounds: search interval for lambda
    :return: BoxCoxResult
    """
    profile = BoxCoxProfile(price, speed)
    lam = golden_section_maximize(profile, bounds[0], bounds[1], tol=1e-8, allow_boundary=True)
    best = profile(lam)
    if lam in bounds:
        logger.warning('Box-Cox lambda estimate %.3f sits on the search boundary', lam)
    lr_log = max(2 * (best - profile(0.0)), 0.0)
    lr_linear = max(2 * (best - profile(1.0)), 0.0)
    return BoxCoxResult(
        lambda_hat=lam, log_likelihood=best, lr_log=lr_log, lr_linear=lr_linear,
        p_log=float(stats.chi2.sf(lr_log, 1)), p_linear=float(stats.chi2.sf(lr_linear, 1)), n=profile.n,
    )
