"""
Coefficient stability under proportional selection on unobservables.
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from estimators.design import TREATMENTS
from estimators.twfe import TwfeSpec, twfe_fit
from primitives.exceptions import InputError

from .exceptions import DegenerateDenominator

logger = logging.getLogger(__name__)

R2_MAX_FACTOR = 1.3
R2_TOLERANCE = 1e-12
SHORT_SPEC = TwfeSpec(covariates=(), absorb_hcp=True)
LONG_SPEC = TwfeSpec(covariates=('ln_speed', 'ln_requests'), absorb_hcp=True)


@dataclass
class OsterReport:
    """
    delta: selection on unobservables relative to observables that would
    drive the long coefficient to zero. beta_star: bias-adjusted coefficient
    at delta = 1. A coefficient that does not move is Stable with delta = inf.
    """
    beta_short: float
    beta_long: float
    r2_short: float
    r2_long: float
    r2_max: float
    delta: float
    beta_star: float
    verdict: str
    term: str = ''

    def records(self):
        return {'term': self.term, 'beta_short': self.beta_short, 'beta_long': self.beta_long,
                'r2_short': self.r2_short, 'r2_long': self.r2_long, 'r2_max': self.r2_max, 'delta': self.delta,
                'beta_star': self.beta_star, 'verdict': self.verdict}


def oster_from_inputs(beta_short, beta_long, r2_short, r2_long, r2_max=None, term=''):
    """
    delta = b (R2 - R2~) / ((b~ - b)(R2max - R2)) and
    beta*(1) = b - (b~ - b)(R2max - R2) / (R2 - R2~), with R2max = min(1.3 R2, 1) by default.
    """
    if r2_short > r2_long + R2_TOLERANCE:
        raise InputError('short-model R2 {0:.6g} exceeds long-model R2 {1:.6g}'.format(r2_short, r2_long))
    if r2_max is None:
        r2_max = min(R2_MAX_FACTOR * r2_long, 1.0)
    movement = beta_short - beta_long
    headroom = r2_max - r2_long
    if movement == 0 or headroom == 0:
        logger.info('oster %s: coefficient stable (movement %.3g, R2 headroom %.3g)', term, movement, headroom)
        return OsterReport(beta_short, beta_long, r2_short, r2_long, r2_max, math.inf, beta_long, 'Stable', term)
    gained = r2_long - r2_short
    if gained <= R2_TOLERANCE:
        raise DegenerateDenominator('{0}: short and long models have the same R2 {1:.6g} but the coefficient '
                                    'moves by {2:.6g}'.format(term or 'coefficient', r2_long, movement))
    delta = beta_long * gained / (movement * headroom)
    beta_star = beta_long - movement * headroom / gained
    return OsterReport(beta_short, beta_long, r2_short, r2_long, r2_max, delta, beta_star, 'Moves', term)


def with_log_requests(panel):
    if 'ln_requests' in panel or 'n_requests' not in panel:
        return panel
    return panel.assign(ln_requests=np.log(panel['n_requests'].astype(float)))


def oster_bounds(panel, spec_short=SHORT_SPEC, spec_long=LONG_SPEC):
    """
    Fit the short and long fixed-effects models and report one OsterReport
    per treatment term, using their within R2.
    :return: dict of term name to OsterReport
    """
    if not set(spec_short.covariates) <= set(spec_long.covariates):
        raise InputError('short covariates {0} are not a subset of long covariates {1}'.format(
            spec_short.covariates, spec_long.covariates))
    panel = with_log_requests(panel)
    short = twfe_fit(panel, replace(spec_short, absorb_hcp=True))
    long = twfe_fit(panel, replace(spec_long, absorb_hcp=True))
    reports = {}
    for term in TREATMENTS:
        if term in short and term in long:
            reports[term] = oster_from_inputs(short.get(term), long.get(term), short.within_r_squared,
                                              long.within_r_squared, term=term)
    return reports
