"""
Two-period facility records, HCP aggregation and the true switching effects.

Period 0 has every facility on the price cap (P1). In period 1 each facility
either stays on the cap or switches to the ad valorem program (P2) or to the
ad valorem program inside a consortium (P2c). Prices in period 1 come from
re-solving the assigned mechanism after scaling the nominal price level by
exp(trend); switchers' price level moves by exp(trend_violation * trend).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import pandas as pd

from mechanism.consortium import consortium_from_markets
from mechanism.demand import LinearDemand, Regime
from mechanism.exceptions import CapNotBinding
from mechanism.solvers import critical_tau, solve_ad_valorem, solve_price_cap
from primitives.exceptions import LabError
from primitives.parallel import ordered_map, substream

from .config import SWITCH_PRICE_SHARE
from .exceptions import EmptyHcp
from .population import STREAM_NOISE, STREAM_SPEED, STREAM_SWITCHING, generate_population

logger = logging.getLogger(__name__)

OUTCOMES = ('price', 'subsidy', 'netcost')
SWITCH_THRESHOLD = 1 / SWITCH_PRICE_SHARE

PANEL_COLUMNS = ('hcp_id', 'period', 'ln_price', 'ln_subsidy', 'ln_netcost', 's2', 's2c', 'ln_speed', 'hcp_type',
                 'service_type', 'state', 'n_requests', 'speed_mbps')
LEVEL_COLUMNS = ('price_sum', 'subsidy_sum', 'netcost_sum', 'urban_ratio')
CATEGORICAL_COLUMNS = ('hcp_type', 'service_type', 'state')


class Program(str, Enum):
    P1 = 'P1'
    P2 = 'P2'
    P2C = 'P2c'


def _with_context(exc, facility):
    exc.args = ('facility {0} (HCP {1}): {2}'.format(facility.facility_id, facility.hcp_id, exc),) + exc.args[1:]
    return exc


def trended(facility, scale):
    """
    Demand and parameters after scaling the nominal price level by ``scale``.
    Quantities at scaled prices are unchanged and every equilibrium price scales by ``scale``.
    """
    demand = LinearDemand(facility.demand.a, facility.demand.b / scale)
    params = replace(facility.params, c=facility.params.c * scale, pbar=facility.params.pbar * scale,
                     gamma=facility.params.gamma / scale, penalty=None)
    return demand, params


def _switching_row(facility, config):
    try:
        outcome = solve_price_cap(facility.demand, facility.params)
    except LabError as exc:
        raise _with_context(exc, facility)
    try:
        critical = critical_tau(facility.demand, facility.params.c, facility.params.pbar)
        tau_star = critical.tau_star if critical.exists else math.nan
    except CapNotBinding:
        tau_star = math.nan
    benefits = not math.isnan(tau_star) and facility.params.tau >= tau_star

    rng = substream(config.seed, config.replication, STREAM_SWITCHING, facility.facility_id)
    shock, route, ratio_draw = rng.logistic(), rng.random(), rng.random()
    ratio = outcome.billed_price / facility.urban_price
    latent = math.log(ratio) - math.log(SWITCH_THRESHOLD) + config.switching_noise * shock
    switches = latent > 0 and (benefits or not config.require_benefit)
    if not switches:
        program = Program.P1
    elif route < config.consortium_share:
        program = Program.P2C
    else:
        program = Program.P2
    revenue_ratio = config.peak_ratio * math.exp((2 * ratio_draw - 1) * math.log(config.consortium_ratio_span))
    return {
        'facility_id': facility.facility_id, 'hcp_id': facility.hcp_id, 'price0': outcome.billed_price,
        'urban_price': facility.urban_price, 'urban_ratio': ratio, 'latent': latent, 'tau_star': tau_star,
        'benefits': benefits, 'program': program.value,
        'revenue_ratio': revenue_ratio if program is Program.P2C else math.nan,
    }


def assign_switching(facilities, config, threads=None):
    """
    Period-1 program per facility.

    A facility switches when ln(p / p_u) - ln(1 / 0.35) plus logistic noise of
    scale ``switching_noise`` is positive and, with ``require_benefit``, its
    subsidy rate is at least its critical rate. A ``consortium_share`` of
    switchers joins a consortium whose ineligible revenue ratio is drawn
    log-uniformly on [R* / span, R* span].
    :param facilities: iterable of Facility
    :param config: ScenarioConfig
    :return: DataFrame, one row per facility
    """
    rows = ordered_map(lambda facility: _switching_row(facility, config), list(facilities), threads)
    columns = ['facility_id', 'hcp_id', 'price0', 'urban_price', 'urban_ratio', 'latent', 'tau_star', 'benefits',
               'program', 'revenue_ratio']
    return pd.DataFrame(rows, columns=columns)


def _per_unit(outcome, tau):
    if outcome.regime in (Regime.CAP_BINDING, Regime.CAP_SLACK):
        return {'price': outcome.billed_price, 'subsidy': outcome.billed_price - outcome.consumer_price,
                'netcost': outcome.consumer_price}
    return {'price': outcome.billed_price, 'subsidy': tau * outcome.billed_price,
            'netcost': (1 - tau) * outcome.billed_price}


def _consortium_per_unit(facility, scale, revenue_ratio, config):
    demand, params = trended(facility, scale)
    eligible = solve_ad_valorem(demand, params)
    b, c = facility.demand.b, facility.params.c
    revenue = eligible.billed_price * eligible.quantity / scale
    intercept = math.sqrt(4 * b * revenue_ratio * revenue + (b * c) ** 2)
    base = params.tau * eligible.billed_price * eligible.quantity
    gamma = config.consortium_enforcement / (params.alpha * base)
    outcome = consortium_from_markets(demand, LinearDemand(intercept, demand.b), params.c, params.tau,
                                      params.alpha, gamma)
    price = outcome.tilde_p_E
    return {'price': price, 'subsidy': params.tau * price, 'netcost': (1 - params.tau) * price}, outcome.kappa_star


def _cap_per_unit(facility, scale):
    demand, params = trended(facility, scale)
    return _per_unit(solve_price_cap(demand, params), params.tau)


def _facility_years(facility, assignment, config):
    program = Program(assignment['program'])
    noise = substream(config.seed, config.replication, STREAM_NOISE, facility.facility_id).normal(
        0.0, config.outcome_noise, size=2) if config.outcome_noise > 0 else np.zeros(2)
    stayer_scale = math.exp(config.trend)
    switcher_scale = math.exp(config.trend_violation * config.trend)
    kappa = math.nan
    try:
        base = _cap_per_unit(facility, 1.0)
        if program is Program.P1:
            actual = counterfactual = _cap_per_unit(facility, stayer_scale)
        else:
            counterfactual = _cap_per_unit(facility, switcher_scale)
            if program is Program.P2:
                demand, params = trended(facility, switcher_scale)
                actual = _per_unit(solve_ad_valorem(demand, params), params.tau)
            else:
                actual, kappa = _consortium_per_unit(facility, switcher_scale, assignment['revenue_ratio'], config)
    except LabError as exc:
        raise _with_context(exc, facility)

    upgrade = config.speed_growth + config.speed_upgrade_sd * substream(
        config.seed, config.replication, STREAM_SPEED, facility.facility_id).standard_normal()
    if program is not Program.P1:
        upgrade += config.switch_speed_gain
    rows = []
    for period, (clean, cf, program_t) in enumerate([(base, base, Program.P1), (actual, counterfactual, program)]):
        mbps = facility.mbps * math.exp(upgrade * period)
        row = {
            'facility_id': facility.facility_id, 'hcp_id': facility.hcp_id, 'period': period,
            'program': program_t.value, 'p1': int(program_t is Program.P1), 'p2': int(program_t is Program.P2),
            'p2c': int(program_t is Program.P2C), 'mbps': mbps, 'ln_speed': math.log(mbps),
            'state': facility.state, 'hcp_type': facility.hcp_type, 'service_type': facility.service_type,
            'urban_ratio': assignment['urban_ratio'], 'kappa': kappa if period == 1 else math.nan,
            'revenue_ratio': assignment['revenue_ratio'] if period == 1 else math.nan,
        }
        for name in OUTCOMES:
            observed = math.log(clean[name]) + noise[period]
            row[name] = math.exp(observed)
            row['ln_' + name] = observed
            row['ln_{0}_clean'.format(name)] = math.log(clean[name])
            row['ln_{0}_cf'.format(name)] = math.log(cf[name])
        rows.append(row)
    return rows


def facility_records(population, assignment, threads=None):
    """
    Facility-year rows (two per facility) with observed, noise-free and
    counterfactual log outcomes.
    """
    config = population.config
    by_id = assignment.set_index('facility_id')
    records = ordered_map(lambda facility: _facility_years(facility, by_id.loc[facility.facility_id], config),
                          population.facilities, threads)
    return pd.DataFrame([row for pair in records for row in pair])


def aggregate_to_hcp(facility_rows):
    """
    Collapse facility-year rows to HCP-year rows.

    Log outcomes become Mbps-weighted means, shares are the Mbps fractions on
    P2 and P2c, level outcomes are summed, and ln_speed is the log of total Mbps.
    :param facility_rows: DataFrame with hcp_id, period, program, mbps and ln_* outcome columns
    :return: DataFrame sorted by (hcp_id, period)
    """
    if facility_rows.empty:
        return pd.DataFrame(columns=list(PANEL_COLUMNS + LEVEL_COLUMNS))
    rows = facility_rows.copy()
    weight = rows['mbps'].astype(float)
    rows['_w'] = weight
    rows['_w2'] = weight * (rows['program'] == Program.P2.value)
    rows['_w2c'] = weight * (rows['program'] == Program.P2C.value)
    outcomes = [name for name in OUTCOMES if 'ln_' + name in rows]
    for name in outcomes:
        rows['_wy_' + name] = weight * rows['ln_' + name]
    grouped = rows.groupby(['hcp_id', 'period'], sort=True)
    sums = grouped[['_w', '_w2', '_w2c'] + ['_wy_' + name for name in outcomes]].sum()
    total = sums['_w']
    if (total <= 0).any():
        empty = total.index[total <= 0][0]
        raise EmptyHcp('HCP {0} has no positive quantity weight in period {1}'.format(*empty))

    panel = pd.DataFrame(index=sums.index)
    for name in outcomes:
        panel['ln_' + name] = sums['_wy_' + name] / total
    panel['s2'] = sums['_w2'] / total
    panel['s2c'] = sums['_w2c'] / total
    panel['ln_speed'] = np.log(total)
    for name in CATEGORICAL_COLUMNS:
        if name in rows:
            panel[name] = grouped[name].first()
    panel['n_requests'] = grouped.size()
    panel['speed_mbps'] = total
    for name in OUTCOMES:
        if name in rows:
            panel[name + '_sum'] = grouped[name].sum()
    panel = panel.reset_index()

    if 'urban_ratio' in rows:
        base = rows[rows['period'] == 0]
        ratio = (base['urban_ratio'] * base['_w']).groupby(base['hcp_id']).sum() / base.groupby('hcp_id')['_w'].sum()
        panel['urban_ratio'] = panel['hcp_id'].map(ratio)
    ordered = [name for name in PANEL_COLUMNS + LEVEL_COLUMNS if name in panel]
    return panel[ordered]


@dataclass
class GroundTruth:
    """
    True effects of switching, per outcome, from the facility record.
    ``tau_12`` and ``tau_12c`` map outcome name to the effect, or None when
    nobody switched to that program.
    """
    tau_12: dict
    tau_12c: dict
    switch_rate: float
    consortium_rate: float
    n_switchers: dict
    programs: dict = field(default_factory=dict, repr=False)
    flags: list = field(default_factory=list)

    def records(self):
        return {
            'tau_12': self.tau_12, 'tau_12c': self.tau_12c, 'switch_rate': self.switch_rate,
            'consortium_rate': self.consortium_rate, 'n_switchers': self.n_switchers, 'flags': list(self.flags),
        }


def recompute_ground_truth(facility_rows):
    """
    Per margin, sum over HCPs of the Mbps-share-weighted effects divided by the
    sum of the margin's shares. The effect of a switcher is its noise-free
    period-1 log outcome minus the noise-free outcome it would have had on P1.
    :param facility_rows: facility-year DataFrame
    :return: GroundTruth
    """
    post = facility_rows[facility_rows['period'] == 1]
    weight = post['mbps'].astype(float)
    hcp_weight = weight.groupby(post['hcp_id']).transform('sum')
    relative = weight / hcp_weight
    truth = {}
    counts = {}
    flags = []
    for program in (Program.P2, Program.P2C):
        on = post['program'] == program.value
        counts[program.value] = int(on.sum())
        shares = float((relative * on).sum())
        effects = {}
        for name in OUTCOMES:
            if 'ln_{0}_cf'.format(name) not in post:
                continue
            clean = post.get('ln_{0}_clean'.format(name), post['ln_' + name])
            delta = clean - post['ln_{0}_cf'.format(name)]
            effects[name] = float((relative * delta * on).sum()) / shares if shares > 0 else None
        truth[program] = effects
        if shares == 0:
            flags.append('no_{0}_switchers'.format(program.value.lower()))
    if len(flags) == 2:
        flags.append('no_switchers')
    for flag in flags:
        logger.warning('ground truth: %s', flag)
    n = len(post)
    return GroundTruth(
        tau_12=truth[Program.P2], tau_12c=truth[Program.P2C],
        switch_rate=(counts['P2'] + counts['P2c']) / n if n else 0.0,
        consortium_rate=counts['P2c'] / n if n else 0.0, n_switchers=counts,
        programs=dict(zip(post['facility_id'], post['program'])), flags=flags,
    )


@dataclass
class SimulationResult:
    population: object
    assignment: pd.DataFrame
    facility_rows: pd.DataFrame
    panel: pd.DataFrame
    ground_truth: GroundTruth

    def request_rows(self):
        """
        Facility-year rows with program indicators, for pooled OLS.
        """
        columns = ['facility_id', 'hcp_id', 'period', 'p1', 'p2', 'p2c', 'ln_price', 'ln_subsidy', 'ln_netcost',
                   'ln_speed', 'state', 'hcp_type', 'service_type']
        return self.facility_rows[columns]


def simulate_panel(config, threads=None):
    """
    Draw the population, assign programs and build the HCP panel.
    :param config: ScenarioConfig
    :param threads: worker threads; results do not depend on it
    :return: SimulationResult
    """
    population = generate_population(config, threads)
    assignment = assign_switching(population.facilities, config, threads)
    rows = facility_records(population, assignment, threads)
    panel = aggregate_to_hcp(rows)
    truth = recompute_ground_truth(rows) if not rows.empty else GroundTruth(
        tau_12={name: None for name in OUTCOMES}, tau_12c={name: None for name in OUTCOMES}, switch_rate=0.0,
        consortium_rate=0.0, n_switchers={'P2': 0, 'P2c': 0}, flags=['no_switchers'])
    logger.info('simulated %d HCP-years; switch rate %.3f, consortium rate %.3f', len(panel), truth.switch_rate,
                truth.consortium_rate)
    return SimulationResult(population, assignment, rows, panel, truth)
