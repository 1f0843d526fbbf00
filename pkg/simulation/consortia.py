"""
Consortium-year rows for the cross-subsidization hump.
"""
import logging
import math

import numpy as np
import pandas as pd

from mechanism.consortium import ConsortiumParams, consortium_optimum
from mechanism.demand import LinearDemand, MarketParams
from mechanism.solvers import solve_ad_valorem
from primitives.parallel import ordered_map, substream

from .population import STREAM_CONSORTIA, draw_market

logger = logging.getLogger(__name__)

CONSORTIUM_COLUMNS = ('consortium_id', 'year', 'ineligible_fraction', 'revenue_ratio', 'kappa', 'ln_price',
                      'mean_bidders', 'ln_mean_speed', 'ln_total_speed')


def _consortium_years(config, index, years, noise):
    rng = substream(config.seed, config.replication, STREAM_CONSORTIA, index)
    a, c, _ = draw_market(rng, config, 1.0)
    eligible = solve_ad_valorem(LinearDemand(a, config.demand_slope), MarketParams(c=c, tau=config.tau))
    base = config.tau * eligible.billed_price * eligible.quantity
    gamma = config.consortium_enforcement / (config.alpha * base)
    span = math.log(config.consortium_ratio_span)
    members = int(rng.integers(2, 9))
    rows = []
    for year in range(years):
        ratio = config.peak_ratio * math.exp(rng.uniform(-span, span))
        optimum = consortium_optimum(ConsortiumParams(B=base, R=ratio, alpha=config.alpha, gamma=gamma))
        ln_mean_speed = rng.normal(config.speed_log_mean, config.speed_log_sd / 2)
        rows.append({
            'consortium_id': 'C{0:04d}'.format(index), 'year': year, 'ineligible_fraction': ratio / (1 + ratio),
            'revenue_ratio': ratio, 'kappa': optimum.kappa_star,
            'ln_price': math.log(optimum.kappa_star * eligible.billed_price) + rng.normal(0.0, noise),
            'mean_bidders': float(rng.poisson(1.5, size=members).mean()),
            'ln_mean_speed': ln_mean_speed, 'ln_total_speed': ln_mean_speed + math.log(members),
        })
    return rows


def simulate_consortia(config, n_consortia=100, years=8, noise=0.05, threads=None):
    """
    Consortium-year rows whose eligible billed price is kappa*(R) p_E.

    Each consortium keeps its eligible market across years and draws a new
    ineligible revenue ratio R every year, log-uniform on
    [R* / span, R* span], with alpha gamma B fixed at ``consortium_enforcement``
    so that the distortion peaks at R* = 1 / sqrt(consortium_enforcement).
    :param config: ScenarioConfig
    :param n_consortia: number of consortia
    :param years: rows per consortium
    :param noise: standard deviation of the log-price shock
    :return: DataFrame with CONSORTIUM_COLUMNS
    """
    drawn = ordered_map(lambda k: _consortium_years(config, k, years, noise), range(n_consortia), threads)
    frame = pd.DataFrame([row for rows in drawn for row in rows], columns=list(CONSORTIUM_COLUMNS))
    logger.info('simulated %d consortium-years; ineligible fraction in [%.3f, %.3f]', len(frame),
                frame['ineligible_fraction'].min() if len(frame) else np.nan,
                frame['ineligible_fraction'].max() if len(frame) else np.nan)
    return frame
