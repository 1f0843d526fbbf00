"""
Sensitivity of the DiD effect to a proportional violation of parallel trends.

The treated group's counterfactual trend is g times the control trend beta0;
the robust effect is beta_did + (1 - g) beta0.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from estimators.twfe import TwfeSpec, twfe_fit
from primitives.exceptions import InputError
from primitives.linear import Z_95, linear_contrast

from .exceptions import NoControlGroup

logger = logging.getLogger(__name__)

MARGINS = {'P2': ('tau_12', 's2', 's2c'), 'P2c': ('tau_12c', 's2c', 's2')}
DEFAULT_G_GRID = tuple(np.round(np.linspace(0.0, 2.0, 21), 10))


@dataclass
class SensitivityCurve:
    margin: str
    outcome: str
    grid: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    beta_did: float
    beta_zero: float
    n: int
    flags: list = field(default_factory=list)

    @property
    def lower(self):
        return self.estimates - Z_95 * self.se

    @property
    def upper(self):
        return self.estimates + Z_95 * self.se

    @property
    def zero_crossing(self):
        """
        g at which the robust effect is zero, if it falls inside the grid.
        """
        if self.beta_zero == 0:
            return None
        g = 1 + self.beta_did / self.beta_zero
        return float(g) if self.grid.min() <= g <= self.grid.max() else None

    def at(self, g):
        return self.beta_did + (1 - g) * self.beta_zero

    def records(self):
        return [{'margin': self.margin, 'outcome': self.outcome, 'g': float(g), 'estimate': float(b),
                 'se': float(s), 'ci_low': float(lo), 'ci_high': float(hi)}
                for g, b, s, lo, hi in zip(self.grid, self.estimates, self.se, self.lower, self.upper)]

    def plot_data(self):
        return [(float(g), float(b), float(lo), float(hi))
                for g, b, lo, hi in zip(self.grid, self.estimates, self.lower, self.upper)]


def canonical_sample(panel, margin):
    """
    Drop every HCP with period-1 bandwidth on the other program, leaving a
    single-treatment DiD.
    """
    _, _, other = MARGINS[margin]
    post = panel[panel['period'] == 1]
    excluded = set(post.loc[post[other] > 0, 'hcp_id'])
    restricted = panel[~panel['hcp_id'].isin(excluded)]
    logger.debug('manski %s: dropped %d HCPs on the other program', margin, len(excluded))
    return restricted


def manski_sensitivity(panel, margin='P2', g_grid=DEFAULT_G_GRID, spec=None):
    """
    Robust effect and 95% interval for each g in ``g_grid``.
    :param panel: two-period HCP panel
    :param margin: 'P2' or 'P2c'
    :param g_grid: ratios of treated to control counterfactual trend
    :param spec: TwfeSpec of the canonical regression (pooled, with the stand-alone T)
    :return: SensitivityCurve; the variance at g uses the joint covariance of (tau, T)
    """
    if margin not in MARGINS:
        raise InputError('margin must be one of {0}'.format(', '.join(MARGINS)))
    term, share, _ = MARGINS[margin]
    spec = replace(spec or TwfeSpec(), absorb_hcp=False)
    restricted = canonical_sample(panel, margin)
    post = restricted[restricted['period'] == 1]
    if not (post[share] == 0).any():
        raise NoControlGroup('every remaining HCP is treated on {0}; no control trend'.format(margin))

    fit = twfe_fit(restricted, spec)
    grid = np.asarray(g_grid, dtype=float)
    estimates = np.empty(len(grid))
    se = np.empty(len(grid))
    for i, g in enumerate(grid):
        contrast = linear_contrast(fit, {term: 1.0, 'T': 1.0 - g})
        estimates[i] = contrast.estimate
        se[i] = contrast.se
    return SensitivityCurve(margin=margin, outcome=spec.outcome, grid=grid, estimates=estimates, se=se,
                            beta_did=fit.get(term), beta_zero=fit.get('T'), n=fit.n, flags=list(fit.flags))
