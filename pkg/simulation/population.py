"""
Facility and HCP draws.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mechanism.demand import LinearDemand, MarketParams
from primitives.exceptions import NonpositiveValues
from primitives.parallel import ordered_map, substream

from .exceptions import RejectionLimit

logger = logging.getLogger(__name__)

STREAM_POPULATION = 0
STREAM_SWITCHING = 1
STREAM_NOISE = 2
STREAM_CONSORTIA = 3
STREAM_SPEED = 4

REJECTION_BATCH = 4096


@dataclass(frozen=True)
class Facility:
    """
    One subsidized site of an HCP.
    :param mbps: quantity weight Q, > 0
    :param urban_price: urban benchmark p_u, > 0
    """
    facility_id: int
    hcp_id: str
    demand: LinearDemand
    params: MarketParams
    urban_price: float
    mbps: float
    state: str
    hcp_type: str
    service_type: str

    def __post_init__(self):
        if not self.mbps > 0:
            raise NonpositiveValues('facility {0}: quantity weight must be > 0'.format(self.facility_id))
        if not self.urban_price > 0:
            raise NonpositiveValues('facility {0}: urban benchmark must be > 0'.format(self.facility_id))

    @property
    def ln_speed(self):
        return math.log(self.mbps)


@dataclass
class Population:
    config: object
    facilities: list
    hcps: pd.DataFrame

    def __len__(self):
        return len(self.facilities)

    @property
    def n_hcps(self):
        return len(self.hcps)

    def frame(self):
        """
        One row per facility, with its demand and mechanism parameters.
        """
        return pd.DataFrame([
            {'facility_id': f.facility_id, 'hcp_id': f.hcp_id, 'a': f.demand.a, 'b': f.demand.b, 'c': f.params.c,
             'pbar': f.params.pbar, 'tau': f.params.tau, 'alpha': f.params.alpha, 'gamma': f.params.gamma,
             'urban_price': f.urban_price, 'mbps': f.mbps, 'state': f.state, 'hcp_type': f.hcp_type,
             'service_type': f.service_type}
            for f in self.facilities
        ], columns=['facility_id', 'hcp_id', 'a', 'b', 'c', 'pbar', 'tau', 'alpha', 'gamma', 'urban_price',
                    'mbps', 'state', 'hcp_type', 'service_type'])


def hcp_label(index):
    return 'H{0:05d}'.format(index)


def draw_market(rng, config, speed_factor):
    """
    Rejection-sample (a, c, cap fraction) until a > b c.
    :return: tuple (a, c, cap fraction)
    """
    b = config.demand_slope
    attempts = 0
    while attempts < config.max_attempts:
        size = min(16 if attempts == 0 else REJECTION_BATCH, config.max_attempts - attempts)
        a = rng.uniform(*config.demand_intercept, size=size) * speed_factor
        c = rng.uniform(*config.cost_range, size=size)
        fraction = rng.uniform(*config.cap_fraction, size=size)
        admissible = np.flatnonzero(a > b * c)
        if len(admissible):
            i = admissible[0]
            return float(a[i]), float(c[i]), float(fraction[i])
        attempts += size
    raise RejectionLimit('no admissible demand draw (a > b c) in {0} attempts'.format(config.max_attempts))


def _draw_hcp(config, index, first_facility_id):
    rng = substream(config.seed, config.replication, STREAM_POPULATION, index)
    hcp_id = hcp_label(index)
    n_facilities = 1 + int(rng.poisson(config.facilities_mean - 1))
    state = 'S{0:02d}'.format(int(rng.integers(config.n_states)))
    hcp_type = 'T{0}'.format(int(rng.integers(config.n_hcp_types)))
    service_type = 'V{0}'.format(int(rng.integers(config.n_service_types)))
    median_speed = math.exp(config.speed_log_mean)
    facilities = []
    for k in range(n_facilities):
        mbps = float(np.exp(rng.normal(config.speed_log_mean, config.speed_log_sd)))
        gamma = config.gamma_median * float(np.exp(config.gamma_dispersion * rng.standard_normal()))
        a, c, fraction = draw_market(rng, config, (mbps / median_speed) ** config.speed_elasticity)
        demand = LinearDemand(a, config.demand_slope)
        pbar = fraction * (a / config.demand_slope + c) / 2
        params = MarketParams(c=c, pbar=pbar, tau=config.tau, alpha=config.alpha, gamma=gamma)
        facilities.append(Facility(
            facility_id=first_facility_id + k, hcp_id=hcp_id, demand=demand, params=params,
            urban_price=config.urban_price_ratio * pbar, mbps=mbps, state=state, hcp_type=hcp_type,
            service_type=service_type,
        ))
    return facilities


def generate_population(config, threads=None):
    """
    Draw every HCP and its facilities. Each HCP has its own random substream,
    so the population does not depend on the number of threads.
    :param config: ScenarioConfig
    :param threads: worker threads, defaults to settings.SUBSIDY_LAB_THREADS
    :return: Population
    """
    # facility ids need the counts first; each count is the first draw of its HCP stream
    counts = [1 + int(substream(config.seed, config.replication, STREAM_POPULATION, j).poisson(
        config.facilities_mean - 1)) for j in range(config.n_hcps)]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    drawn = ordered_map(lambda j: _draw_hcp(config, j, int(offsets[j])), range(config.n_hcps), threads)
    facilities = [facility for group in drawn for facility in group]
    hcps = pd.DataFrame(
        [{'hcp_id': group[0].hcp_id, 'state': group[0].state, 'hcp_type': group[0].hcp_type,
          'service_type': group[0].service_type, 'n_facilities': len(group)} for group in drawn],
        columns=['hcp_id', 'state', 'hcp_type', 'service_type', 'n_facilities'])
    logger.info('drew %d facilities in %d HCPs (seed %d, replication %d)', len(facilities), len(hcps),
                config.seed, config.replication)
    return Population(config=config, facilities=facilities, hcps=hcps)
