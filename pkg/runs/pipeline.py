"""
simulate -> estimate -> diagnose, shared by the management commands and the
replicate scenarios. Every step writes its files atomically and registers them
with a RunRecorder, which emits the run manifest.
"""
import logging
import os
import time
from dataclasses import replace

import numpy as np
import pandas as pd
from django.conf import settings
from django.db import DatabaseError

from diagnostics.cooks import cooks_trim
from diagnostics.forms import functional_form_comparison
from diagnostics.hump import fwl_hump
from diagnostics.manski import DEFAULT_G_GRID, MARGINS, manski_sensitivity
from diagnostics.oster import oster_bounds, oster_from_inputs
from diagnostics.support import common_support
from estimators.design import OUTCOME_COLUMNS
from estimators.dml import DmlSpec, dml_plr_fit
from estimators.pols import pols_fit
from estimators.switching import switching_frame, switching_logit
from estimators.twfe import TreatmentMode, TwfeSpec, twfe_fit
from primitives.boxcox import boxcox_profile
from primitives.exceptions import InputError
from simulation.consortia import CONSORTIUM_COLUMNS
from simulation.panel import simulate_panel

from . import csv_io
from .exceptions import IoFailure, SchemaViolation
from .models import RunManifest, manifest_digest, module_versions
from .reports import clean, estimate_record, estimate_rows, render_estimates, render_records

logger = logging.getLogger(__name__)

METHODS = ('pols', 'twfe-cont', 'twfe-bin', 'dml')
BATTERY = ('manski', 'oster', 'cooks', 'support', 'forms', 'boxcox', 'logit', 'hump')
PANEL_FREE = {'hump'}


def output_dir(path=None):
    path = path or getattr(settings, 'SUBSIDY_LAB_OUTPUT_DIR', 'output')
    os.makedirs(path, exist_ok=True)
    return path


class RunRecorder:
    """
    Collects output file digests for one command and writes its manifest.
    """

    def __init__(self, command, out_dir, scenario=''):
        self.command = command
        self.scenario = scenario
        self.out_dir = output_dir(out_dir)
        self.outputs = {}
        self.started = time.perf_counter()

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def add(self, name):
        """
        Register a file already written under the output directory.
        """
        self.outputs[name] = csv_io.file_digest(self.path(name))
        return self.path(name)

    def write_frame(self, frame, name):
        csv_io.write_frame(frame, self.path(name))
        return self.add(name)

    def write_json(self, payload, name):
        csv_io.write_json(clean(payload), self.path(name))
        return self.add(name)

    def write_text(self, text, name):
        csv_io.atomic_write(self.path(name), text)
        return self.add(name)

    def finish(self, config, seed=None):
        """
        Write manifest.json and store the RunManifest row.
        :param config: JSON-serializable config snapshot
        :param seed: root seed, if the run has one
        :return: RunManifest (unsaved when the database is unavailable)
        """
        config = clean(config)
        manifest = RunManifest(command=self.command, scenario=self.scenario, config=config, seed=seed,
                               module_versions=module_versions(), wall_time=time.perf_counter() - self.started,
                               output_digests=dict(sorted(self.outputs.items())))
        try:
            manifest.save()
        except DatabaseError as exc:
            manifest.digest = manifest_digest(manifest.config, manifest.seed, manifest.output_digests)
            logger.warning('run manifest not stored in the database: %s', exc)
        csv_io.write_json(manifest.as_dict(), self.path('manifest.json'))
        logger.info('%s finished in %.2fs; manifest digest %s', self.command, manifest.wall_time, manifest.digest)
        return manifest


def simulate(config, recorder, threads=None):
    """
    Simulate the panel and write panel.csv and ground_truth.json.
    :return: SimulationResult
    """
    result = simulate_panel(config, threads)
    csv_io.write_panel(result.panel, recorder.path('panel.csv'))
    recorder.add('panel.csv')
    recorder.write_json(result.ground_truth.records(), 'ground_truth.json')
    return result


def check_columns(panel, names):
    """
    SchemaViolation naming the first column the estimate asks for that the panel lacks.
    """
    for name in names:
        if name and name not in panel.columns:
            raise SchemaViolation('column requested by the estimate is not in the panel', column=name)


def outcome_list(outcome):
    return list(OUTCOME_COLUMNS) if outcome == 'all' else [outcome]


def fit(panel, method, outcome, covariates=('ln_speed',), k_folds=10, seed=0, learner='forest', threads=None):
    """
    One estimate of ``outcome`` by ``method``.
    :return: EstimateResult
    """
    covariates = tuple(covariates)
    check_columns(panel, (outcome,) + covariates)
    if method == 'pols':
        return pols_fit(panel, outcome=outcome, covariates=covariates, shares=True)
    if method in ('twfe-cont', 'twfe-bin'):
        mode = TreatmentMode.CONTINUOUS if method == 'twfe-cont' else TreatmentMode.BINARY
        return twfe_fit(panel, TwfeSpec(outcome=outcome, mode=mode, covariates=covariates))
    if method == 'dml':
        spec = DmlSpec(k_folds=k_folds, seed=seed, learner=learner, outcome=outcome, covariates=covariates)
        return dml_plr_fit(panel, spec, threads=threads)
    raise InputError('unknown method {0!r}; choose one of {1}'.format(method, ', '.join(METHODS)))


def estimate(panel, methods, outcomes, recorder, **options):
    """
    Fit every (method, outcome) pair and write estimates.csv, estimates.json and estimates.txt.
    :return: (list of (method, outcome, EstimateResult), rendered table)
    """
    fits = []
    rows = []
    records = []
    for method in methods:
        for outcome in outcomes:
            result = fit(panel, method, outcome, **options)
            fits.append((method, outcome, result))
            rows.extend(estimate_rows(result, method, outcome))
            records.append(estimate_record(result, method, outcome))
    table = render_estimates(rows)
    recorder.write_frame(pd.DataFrame(rows), 'estimates.csv')
    recorder.write_json(records, 'estimates.json')
    recorder.write_text(table, 'estimates.txt')
    return fits, table


def read_consortium_rows(path):
    """
    Consortium-year rows for the hump test.
    """
    try:
        rows = pd.read_csv(path, encoding='utf-8', dtype={'consortium_id': str})
    except FileNotFoundError as exc:
        raise IoFailure('consortium file {0} does not exist'.format(path)) from exc
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaViolation('malformed consortium CSV: {0}'.format(exc)) from exc
    for name in CONSORTIUM_COLUMNS:
        if name not in rows.columns:
            raise SchemaViolation('required column is missing', column=name)
    return rows


def _pre_period(panel):
    pre = panel[panel['period'] == 0]
    return np.exp(pre['ln_price'].to_numpy(dtype=float)), pre['speed_mbps'].to_numpy(dtype=float)


def _manski(panel, recorder, g_grid):
    summary = {}
    for margin, (term, share, _) in MARGINS.items():
        if not (panel[share] > 0).any():
            summary[margin] = {'skipped': 'no HCP on {0}'.format(margin)}
            continue
        curve = manski_sensitivity(panel, margin, g_grid)
        recorder.write_frame(pd.DataFrame(curve.records()), 'manski_{0}.csv'.format(margin))
        csv_io.write_plot_data(curve.plot_data(), recorder.path('manski_{0}_plot.csv'.format(margin)))
        recorder.add('manski_{0}_plot.csv'.format(margin))
        summary[margin] = {'term': term, 'beta_did': curve.beta_did, 'beta_zero': curve.beta_zero,
                           'robust_at_1': curve.at(1.0), 'zero_crossing': curve.zero_crossing, 'n': curve.n,
                           'flags': curve.flags}
    return summary


def _oster(panel, recorder, oster_inputs):
    if oster_inputs is not None:
        reports = {'inputs': oster_from_inputs(*oster_inputs)}
    else:
        reports = oster_bounds(panel)
    records = [dict(report.records(), term=report.term or name) for name, report in reports.items()]
    recorder.write_frame(pd.DataFrame(records), 'oster.csv')
    return {record['term']: record for record in records}


def _cooks(panel, recorder):
    report = cooks_trim(panel)
    recorder.write_frame(report.delta_table(), 'cooks.csv')
    recorder.write_frame(report.distances, 'cooks_distances.csv')
    return {'threshold': report.threshold, 'flagged_hcps': report.flagged_hcps, 'flags': report.flags}


def _support(panel, recorder):
    report = common_support(panel)
    recorder.write_frame(pd.DataFrame(report.delta_table()), 'support.csv')
    return {'anchor_program': report.anchor_program, 'speed_range': list(report.speed_range),
            'n_hcps_before': report.n_hcps_before, 'n_hcps_after': report.n_hcps_after}


def _forms(panel, recorder):
    fits = functional_form_comparison(*_pre_period(panel))
    recorder.write_frame(pd.DataFrame([form.records() for form in fits]), 'forms.csv')
    return {'best': fits[0].name, 'ranking': [form.name for form in fits]}


def _boxcox(panel, recorder):
    result = boxcox_profile(*_pre_period(panel))
    record = {'lambda_hat': result.lambda_hat, 'log_likelihood': result.log_likelihood, 'n': result.n,
              'tests': result.records()}
    recorder.write_json(record, 'boxcox.json')
    return record


def _logit(panel, recorder):
    path = switching_logit(switching_frame(panel))
    recorder.write_frame(pd.DataFrame(path.records()), 'logit.csv')
    return {'models': list(path.labels), 'pseudo_r2': path.pseudo_r2, 'increments': path.increments,
            'h_path': path.coefficient_path('H')}


def _hump(rows, recorder):
    if rows is None:
        raise InputError('the hump diagnostic needs --consortium-rows')
    report = fwl_hump(rows)
    csv_io.write_plot_data(report.plot_data(), recorder.path('hump_plot.csv'))
    recorder.add('hump_plot.csv')
    return report.summary()


def diagnose(panel, battery, recorder, g_grid=DEFAULT_G_GRID, consortium_rows=None, oster_inputs=None):
    """
    Run the requested diagnostics and write one report per item plus
    diagnose.json and diagnose.txt.
    :param panel: validated HCP panel, or None when only panel-free items run
    :param battery: names from BATTERY
    :param g_grid: Manski g values
    :param consortium_rows: consortium-year DataFrame for the hump test
    :param oster_inputs: (beta_short, beta_long, r2_short, r2_long, r2_max) to bypass the panel fits
    :return: (dict of item name to summary record, rendered text)
    """
    unknown = [item for item in battery if item not in BATTERY]
    if unknown:
        raise InputError('unknown diagnostic {0!r}; choose from {1}'.format(unknown[0], ', '.join(BATTERY)))
    needs_panel = [item for item in battery if item not in PANEL_FREE and not (item == 'oster' and oster_inputs)]
    if needs_panel and panel is None:
        raise InputError('diagnostic {0!r} needs --panel'.format(needs_panel[0]))
    runners = {
        'manski': lambda: _manski(panel, recorder, g_grid),
        'oster': lambda: _oster(panel, recorder, oster_inputs),
        'cooks': lambda: _cooks(panel, recorder),
        'support': lambda: _support(panel, recorder),
        'forms': lambda: _forms(panel, recorder),
        'boxcox': lambda: _boxcox(panel, recorder),
        'logit': lambda: _logit(panel, recorder),
        'hump': lambda: _hump(consortium_rows, recorder),
    }
    results = {}
    for item in battery:
        logger.info('diagnostic %s', item)
        results[item] = runners[item]()
    results = clean(results)
    recorder.write_json(results, 'diagnose.json')
    text = '\n'.join(render_records(_flatten(summary), title=item) for item, summary in results.items())
    recorder.write_text(text, 'diagnose.txt')
    return results, text


def _flatten(summary):
    if all(isinstance(value, dict) for value in summary.values()):
        return [dict({'key': key}, **{name: value for name, value in record.items() if not isinstance(value, list)})
                for key, record in summary.items()]
    return [{name: value if not isinstance(value, list) else ', '.join(str(part) for part in value)
             for name, value in summary.items()}]


def with_seed(config, seed):
    return config if seed is None else replace(config, seed=int(seed))
