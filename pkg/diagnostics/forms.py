"""
Price-speed functional forms compared on the price scale.
"""
import logging
from dataclasses import dataclass

import numpy as np

from primitives.exceptions import NonpositiveP, NonpositiveValues
from primitives.linear import DesignMatrix, ols_fit

logger = logging.getLogger(__name__)

# name: (log outcome, regressor builders)
FORMS = {
    'quadratic': (False, (lambda s: s, lambda s: s ** 2)),
    'lin-log': (False, (np.log,)),
    'lin-sqrt': (False, (np.sqrt,)),
    'log-quadratic': (True, (np.log, lambda s: np.log(s) ** 2)),
    'log-log': (True, (np.log,)),
    'linear': (False, (lambda s: s,)),
    'log-sqrt': (True, (np.sqrt,)),
    'log-linear': (True, (lambda s: s,)),
}


@dataclass
class FormFit:
    name: str
    log_outcome: bool
    coef: tuple
    r_squared: float
    adj_r_squared: float
    rmse: float
    n: int
    rank: int = 0

    def records(self):
        return {'rank': self.rank, 'form': self.name, 'log_outcome': self.log_outcome, 'r_squared': self.r_squared,
                'adj_r_squared': self.adj_r_squared, 'rmse': self.rmse, 'n': self.n}


def fit_form(name, price, speed):
    """
    Fit one form by OLS and score it on the price scale, exponentiating the
    fitted values of log-outcome forms without a smearing correction.
    """
    log_outcome, builders = FORMS[name]
    design = DesignMatrix(np.column_stack([build(speed) for build in builders]),
                          tuple('x{0}'.format(j) for j in range(len(builders)))).with_intercept()
    result = ols_fit(design, np.log(price) if log_outcome else price, cluster_robust=False)
    predicted = np.exp(result.fitted) if log_outcome else result.fitted
    n, k = design.n_rows, design.n_cols
    ssr = float(np.sum((price - predicted) ** 2))
    sst = float(np.sum((price - price.mean()) ** 2))
    r_squared = 1 - ssr / sst if sst > 0 else np.nan
    return FormFit(name=name, log_outcome=log_outcome, coef=tuple(result.coef), r_squared=r_squared,
                   adj_r_squared=1 - (1 - r_squared) * (n - 1) / (n - k) if n > k else np.nan,
                   rmse=float(np.sqrt(ssr / n)), n=n)


def functional_form_comparison(price, speed):
    """
    Fit all eight forms and rank them by adjusted R2 on the price scale.
    :param price: positive prices
    :param speed: positive speeds
    :return: list of FormFit, best first
    """
    price = np.asarray(price, dtype=float).ravel()
    speed = np.asarray(speed, dtype=float).ravel()
    if np.any(~np.isfinite(price)) or np.any(price <= 0):
        raise NonpositiveP('functional forms require strictly positive prices')
    if np.any(~np.isfinite(speed)) or np.any(speed <= 0):
        raise NonpositiveValues('functional forms require strictly positive speeds')
    fits = sorted((fit_form(name, price, speed) for name in FORMS),
                  key=lambda fit: -fit.adj_r_squared if np.isfinite(fit.adj_r_squared) else np.inf)
    for rank, fit in enumerate(fits, start=1):
        fit.rank = rank
    logger.info('functional forms: %s ranks first (adjusted R2 %.4f)', fits[0].name, fits[0].adj_r_squared)
    return fits
