"""
Registered end-to-end scenarios for ``manage.py replicate``.

Each scenario returns a list of Criterion objects; run_scenario writes them to
summary.json and summary.txt next to the scenario's own output files and
records one manifest.
"""
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from django.conf import settings

from diagnostics.hump import HumpVerdict
from diagnostics.manski import manski_sensitivity
from estimators.dml import DmlSpec, dml_plr, dml_plr_fit, orthogonality_probe
from estimators.twfe import TwfeSpec, twfe_fit
from mechanism.consortium import (ConsortiumParams, consortium_objective, consortium_objective_slope,
                                  consortium_optimum, kappa_curve)
from mechanism.demand import LinearDemand, MarketParams
from mechanism.dominance import dominance_report
from mechanism.solvers import closed_forms, critical_tau
from primitives.boxcox import boxcox_profile
from primitives.forest import ForestParams
from primitives.optimize import golden_section_maximize, polish_root
from primitives.parallel import substream
from simulation.config import ScenarioConfig
from simulation.consortia import simulate_consortia
from simulation.panel import simulate_panel

from . import pipeline
from .exceptions import UnknownScenario
from .reports import clean, render_summary

logger = logging.getLogger(__name__)

RELATIVE_TOLERANCE = 1e-6
HUMP_TOLERANCE = 1e-8
COVERAGE_RANGE = (0.92, 0.98)
DML_BIAS_LIMIT = 0.05
DML_EVERY = 10
ANCHOR_OSTER_INPUTS = (-0.261, -1.249, 0.043, 0.387, 0.502)

SCENARIOS = {}


@dataclass
class Criterion:
    name: str
    passed: bool
    detail: str
    value: object = None


def scenario(name, replications=None):
    """
    Register a scenario function taking (context) and returning criteria.
    """
    def register(func):
        SCENARIOS[name] = (func, replications)
        return func
    return register


@dataclass
class ScenarioContext:
    seed: int
    replications: int
    recorder: object

    def config(self, **changes):
        return ScenarioConfig(seed=self.seed, **changes)


def _relative_error(value, reference):
    return abs(value - reference) / max(1.0, abs(reference))


def draw_market(rng):
    """
    Linear market with a binding cap, an interior critical rate and tau >= tau*.
    """
    a = rng.uniform(20.0, 500.0)
    b = rng.uniform(0.2, 5.0)
    c = rng.uniform(0.5, 0.9) * a / b
    tau_star = rng.uniform(0.02, 0.95)
    p_no = (a / b + c) / 2
    tau = tau_star + rng.uniform(0.0, 0.99) * (1 - tau_star) * 0.999
    return LinearDemand(a, b), MarketParams(c=c, pbar=p_no - tau_star * c / 2, tau=tau,
                                            alpha=rng.uniform(0.05, 1.0), gamma=rng.uniform(0.01, 10.0))


def brute_force(demand, params):
    """
    Equilibrium objects by direct search on the provider's objective.
    """
    a, b, c, pbar, tau = demand.a, demand.b, params.c, params.pbar, params.tau
    p_no = golden_section_maximize(lambda p: (p - c) * demand.quantity(p), c, a / b, tol=1e-12)
    quantity = demand.quantity(pbar)
    enforcement = params.enforcement
    margin = golden_section_maximize(lambda m: (pbar + m - c) * quantity - enforcement / 2 * m ** 2, 0.0,
                                     2 * quantity / enforcement + 1.0, tol=1e-12)
    p_c_adv = golden_section_maximize(lambda p: (p / (1 - tau) - c) * demand.quantity(p), c * (1 - tau), a / b,
                                      tol=1e-12)
    return {'p_no': p_no, 'p_cap': pbar + margin, 'p_c_adv': p_c_adv,
            'tau_star': critical_tau(demand.as_general(), c, pbar).tau_star}


@scenario('closed-form', replications=1000)
def closed_form_scenario(context):
    rows = []
    for draw in range(context.replications):
        demand, params = draw_market(substream(context.seed, 0, draw))
        exact = closed_forms(demand, params)
        numeric = brute_force(demand, params)
        rows.append(dict({'draw': draw}, **{name: _relative_error(numeric[name], exact[name]) for name in numeric}))
    errors = pd.DataFrame(rows)
    context.recorder.write_frame(errors, 'closed_form_errors.csv')
    return [Criterion('closed_form_{0}'.format(name), bool(errors[name].max() < RELATIVE_TOLERANCE),
                      'max relative error {0:.3g} over {1} draws'.format(errors[name].max(), len(errors)),
                      float(errors[name].max()))
            for name in ('p_no', 'p_cap', 'p_c_adv', 'tau_star')]


@scenario('dominance-sweep', replications=1000)
def dominance_scenario(context):
    rows = []
    for draw in range(context.replications):
        demand, params = draw_market(substream(context.seed, 1, draw))
        report = dominance_report(demand, params)
        rows.append({'draw': draw, 'tau_star': report.tau_star, 'tau': params.tau,
                     'threshold': report.enforcement_threshold,
                     **{'part_' + check.part: check.holds for check in report.checks},
                     'iii_applicable': report.check('iii').applicable})
    table = pd.DataFrame(rows)
    context.recorder.write_frame(table, 'dominance.csv')
    first = table.head(100)
    applicable = table[table['iii_applicable']]
    return [
        Criterion('part_i', bool(table['part_i'].all()),
                  '{0} of {1} draws'.format(table['part_i'].sum(), len(table))),
        Criterion('part_ii', bool(table['part_ii'].all()),
                  '{0} of {1} draws'.format(table['part_ii'].sum(), len(table))),
        Criterion('part_iii', bool(applicable['part_iii'].all()),
                  '{0} of {1} inelastic draws'.format(applicable['part_iii'].sum(), len(applicable))),
        Criterion('part_iv', bool(first['part_iv'].all() and first['threshold'].notna().all()),
                  'threshold found on {0} of {1} draws'.format(first['threshold'].notna().sum(), len(first))),
    ]


def _kappa_by_search(params):
    upper = 1 + params.R
    kappa = golden_section_maximize(lambda k: consortium_objective(params, k), 1.0, upper, allow_boundary=True)
    return polish_root(lambda k: consortium_objective_slope(params, k), max(1.0, kappa - 1e-3),
                       min(upper, kappa + 1e-3), kappa)


@scenario('hump', replications=100)
def hump_scenario(context):
    ratios = np.unique(np.concatenate([np.geomspace(0.05, 20.0, 400), [1.0]]))
    curve = kappa_curve(1.0, 1.0, 1.0, ratios)
    peak = float(ratios[int(np.argmax(curve))])
    searched = np.array([_kappa_by_search(ConsortiumParams(1.0, float(r), 1.0, 1.0)) for r in ratios])
    gap = float(np.max(np.abs(searched - curve)))
    at_one = consortium_optimum(ConsortiumParams(1.0, 1.0, 1.0, 1.0)).kappa_star

    config = context.config()
    rows = simulate_consortia(config, n_consortia=context.replications)
    context.recorder.write_frame(rows, 'consortia.csv')
    results, _ = pipeline.diagnose(None, ('hump',), context.recorder, consortium_rows=rows)
    report = results['hump']
    truth = config.peak_ratio / (1 + config.peak_ratio)
    return [
        Criterion('kappa_peak', peak == 1.0 and at_one == 2.0,
                  'peak at R={0:g} with kappa*={1:g}'.format(peak, at_one)),
        Criterion('grid_search_agrees', gap < HUMP_TOLERANCE, 'max |search - formula| {0:.3g}'.format(gap), gap),
        Criterion('planted_hump_inverted_u', report['verdict'] == HumpVerdict.INVERTED_U.value, report['verdict']),
        Criterion('peak_location', abs(report['peak_location'] - truth) <= 0.05,
                  'peak at fraction {0:.4f}, planted {1:.4f}'.format(report['peak_location'], truth),
                  report['peak_location']),
        Criterion('fwl_identity', abs(report['fwl_slope'] - report['fwl_coefficient']) < HUMP_TOLERANCE,
                  'slope {0:.10g} vs coefficient {1:.10g}'.format(report['fwl_slope'], report['fwl_coefficient'])),
    ]


def _covers(result, term, truth):
    if truth is None or term not in result:
        return None
    low, high = result.conf_int()[result.index(term)]
    return bool(low <= truth <= high)


@scenario('coverage', replications=200)
def coverage_scenario(context):
    rows = []
    for replication in range(context.replications):
        simulated = simulate_panel(context.config(replication=replication))
        truth = simulated.ground_truth
        fit = twfe_fit(simulated.panel, TwfeSpec())
        row = {'replication': replication, 'tau_12_true': truth.tau_12['price'],
               'tau_12c_true': truth.tau_12c['price'],
               'tau_12_hat': fit.get('tau_12') if 'tau_12' in fit else np.nan,
               'tau_12c_hat': fit.get('tau_12c') if 'tau_12c' in fit else np.nan,
               'tau_12_covered': _covers(fit, 'tau_12', truth.tau_12['price']),
               'tau_12c_covered': _covers(fit, 'tau_12c', truth.tau_12c['price']),
               'dml_tau_12_bias': np.nan, 'dml_tau_12c_bias': np.nan}
        if replication % DML_EVERY == 0:
            dml = dml_plr_fit(simulated.panel, DmlSpec(seed=replication))
            for term, effect in (('tau_12', truth.tau_12), ('tau_12c', truth.tau_12c)):
                if term in dml and effect['price'] is not None:
                    row['dml_{0}_bias'.format(term)] = dml.get(term) - effect['price']
        rows.append(row)
    table = pd.DataFrame(rows)
    context.recorder.write_frame(table, 'coverage.csv')
    criteria = []
    for term in ('tau_12', 'tau_12c'):
        covered = table['{0}_covered'.format(term)].dropna().astype(bool)
        rate = float(covered.mean()) if len(covered) else float('nan')
        criteria.append(Criterion('{0}_coverage'.format(term), COVERAGE_RANGE[0] <= rate <= COVERAGE_RANGE[1],
                                  '{0:.3f} over {1} replications'.format(rate, len(covered)), rate))
        bias = table['dml_{0}_bias'.format(term)].dropna()
        mean_bias = float(bias.mean()) if len(bias) else float('nan')
        criteria.append(Criterion('dml_{0}_bias'.format(term), abs(mean_bias) < DML_BIAS_LIMIT,
                                  'mean bias {0:.4f} over {1} replications'.format(mean_bias, len(bias)), mean_bias))
    return criteria


@scenario('manski', replications=100)
def manski_scenario(context):
    violation = 1.3
    rows = []
    for replication in range(context.replications):
        simulated = simulate_panel(context.config(trend_violation=violation, replication=replication))
        truth = simulated.ground_truth.tau_12['price']
        curve = manski_sensitivity(simulated.panel, 'P2', g_grid=(1.0, violation))
        rows.append({'replication': replication, 'truth': truth, 'beta_did': curve.beta_did,
                     'robust_at_1': curve.estimates[0], 'robust': curve.estimates[1], 'ci_low': curve.lower[1],
                     'ci_high': curve.upper[1],
                     'covered': truth is not None and bool(curve.lower[1] <= truth <= curve.upper[1])})
    table = pd.DataFrame(rows)
    context.recorder.write_frame(table, 'manski.csv')
    identity = float(np.max(np.abs(table['robust_at_1'] - table['beta_did'])))
    rate = float(table['covered'].mean())
    return [
        Criterion('identity_at_one', identity <= 1e-12, 'max |beta(1) - beta_did| {0:.3g}'.format(identity),
                  identity),
        Criterion('recovery_at_true_g', rate >= 0.9,
                  'beta({0:g}) covers the true effect in {1:.0%} of {2} replications'.format(
                      violation, rate, len(table)), rate),
    ]


@scenario('oster-anchor')
def oster_scenario(context):
    results, _ = pipeline.diagnose(None, ('oster',), context.recorder, oster_inputs=ANCHOR_OSTER_INPUTS)
    report = results['oster']['inputs']
    return [
        Criterion('delta', -3.9 <= report['delta'] <= -3.6, 'delta {0:.4f}'.format(report['delta']),
                  report['delta']),
        Criterion('beta_star', -1.62 <= report['beta_star'] <= -1.54, 'beta* {0:.4f}'.format(report['beta_star']),
                  report['beta_star']),
    ]


@scenario('dml-orthogonality')
def dml_scenario(context):
    rng = substream(context.seed, 2)
    n = 5000
    x = rng.standard_normal(n)
    s = x + rng.standard_normal(n)
    y = 2.0 * s + 3.0 * x + rng.standard_normal(n)
    linear = dml_plr(y, s, x, DmlSpec(k_folds=5, learner='linear', seed=context.seed), names=('S',))
    probe = orthogonality_probe(linear, epsilon=0.01)
    forest = dml_plr(y, s, x, DmlSpec(k_folds=5, forest=ForestParams(n_trees=20, min_leaf=50, max_depth=6),
                                      seed=context.seed), names=('S',))
    context.recorder.write_json({'probe': probe.records(), 'theta_linear': linear.get('S'),
                                 'theta_forest': forest.get('S'), 'se_forest': forest.standard_error('S')},
                                'dml_orthogonality.json')
    return [
        Criterion('orthogonality_ratio', 3.5 <= probe.ratio <= 4.5, 'ratio {0:.3f}'.format(probe.ratio), probe.ratio),
        Criterion('forest_theta', abs(forest.get('S') - 2.0) <= 0.1, 'theta {0:.4f}'.format(forest.get('S')),
                  forest.get('S')),
    ]


@scenario('boxcox')
def boxcox_scenario(context):
    rng = substream(context.seed, 3)
    n = 1000
    log_speed = rng.uniform(0, 8, size=n)
    log_log = boxcox_profile(np.exp(2 + 0.5 * log_speed + rng.normal(scale=0.1, size=n)), np.exp(log_speed))
    log_speed = rng.uniform(0, 16, size=n)
    lin_log = boxcox_profile(2 + 0.5 * log_speed + rng.normal(scale=0.1, size=n), np.exp(log_speed))
    context.recorder.write_json({'log_log': asdict(log_log), 'lin_log': asdict(lin_log)}, 'boxcox.json')
    return [
        Criterion('log_log_lambda', -0.1 <= log_log.lambda_hat <= 0.1, 'lambda {0:.4f}'.format(log_log.lambda_hat),
                  log_log.lambda_hat),
        Criterion('log_log_rejects_linear', log_log.p_linear < 0.001, 'p {0:.3g}'.format(log_log.p_linear),
                  log_log.p_linear),
        Criterion('lin_log_lambda', 0.85 <= lin_log.lambda_hat <= 1.15, 'lambda {0:.4f}'.format(lin_log.lambda_hat),
                  lin_log.lambda_hat),
    ]


@scenario('default')
def default_scenario(context):
    config = context.config()
    simulated = pipeline.simulate(config, context.recorder)
    fits, _ = pipeline.estimate(simulated.panel, pipeline.METHODS, ['ln_price'], context.recorder,
                                seed=context.seed)
    rows = simulate_consortia(config)
    context.recorder.write_frame(rows, 'consortia.csv')
    results, _ = pipeline.diagnose(simulated.panel, pipeline.BATTERY, context.recorder, consortium_rows=rows)
    truth = simulated.ground_truth
    twfe = next(result for method, _, result in fits if method == 'twfe-cont')
    criteria = []
    for term, effect in (('tau_12', truth.tau_12), ('tau_12c', truth.tau_12c)):
        if effect['price'] is None or term not in twfe:
            criteria.append(Criterion('twfe_{0}'.format(term), False, 'margin absent'))
            continue
        distance = abs(twfe.get(term) - effect['price']) / twfe.standard_error(term)
        criteria.append(Criterion('twfe_{0}'.format(term), distance <= 4.0,
                                  'estimate {0:.4f}, truth {1:.4f}, {2:.2f} SE apart'.format(
                                      twfe.get(term), effect['price'], distance), distance))
    hump = results['hump']
    criteria.append(Criterion('battery_completed', set(results) == set(pipeline.BATTERY),
                              ', '.join(sorted(results))))
    criteria.append(Criterion('fwl_identity', abs(hump['fwl_slope'] - hump['fwl_coefficient']) < HUMP_TOLERANCE,
                              'slope {0:.10g} vs coefficient {1:.10g}'.format(hump['fwl_slope'],
                                                                             hump['fwl_coefficient'])))
    return criteria


def run_scenario(name, out_dir=None, seed=0, replications=None):
    """
    Run a registered scenario and write its summary and manifest.
    :param name: key of SCENARIOS
    :param out_dir: output directory; defaults to SUBSIDY_LAB_OUTPUT_DIR/<name>
    :param seed: root seed
    :param replications: override the scenario's default count
    :return: (summary dict, RunManifest)
    """
    if name not in SCENARIOS:
        raise UnknownScenario('unknown scenario {0!r}; registered: {1}'.format(name, ', '.join(sorted(SCENARIOS))))
    func, default_replications = SCENARIOS[name]
    count = replications if replications is not None else default_replications
    out_dir = out_dir or os.path.join(getattr(settings, 'SUBSIDY_LAB_OUTPUT_DIR', 'output'), name)
    recorder = pipeline.RunRecorder('replicate', out_dir, scenario=name)
    criteria = func(ScenarioContext(seed=seed, replications=count, recorder=recorder))
    summary = clean({'scenario': name, 'seed': seed, 'replications': count,
                     'criteria': [asdict(criterion) for criterion in criteria],
                     'passed': all(criterion.passed for criterion in criteria)})
    for criterion in criteria:
        log = logger.info if criterion.passed else logger.warning
        log('%s %s: %s', name, criterion.name, criterion.detail)
    recorder.write_json(summary, 'summary.json')
    recorder.write_text(render_summary(summary), 'summary.txt')
    manifest = recorder.finish({'scenario': name, 'replications': count}, seed=seed)
    return summary, manifest
