import io
import json
import os
import shutil
import tempfile

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from django.urls import reverse

from estimators.twfe import TwfeSpec, twfe_fit
from primitives.exceptions import Separation
from simulation.config import ScenarioConfig
from simulation.panel import simulate_panel

from .config import config_text, default_config, load_config, locate_keys, parse_config
from .csv_io import read_panel, write_frame, write_panel
from .exceptions import ConfigParse, IoFailure, SchemaViolation
from .forms import ScenarioConfigForm
from .management.base import LabCommand, float_list
from .models import RunManifest, manifest_digest
from .reports import estimate_rows, render_estimates, render_summary
from .templatetags.runs_tags import short_digest

MINIMAL_CONFIG = """
[population]
n_hcps = 3

[panel]
outcome_noise = 0.0

[run]
seed = 11
"""


def setup_test_data(cls):
    """
    Callback function to setup test data
    :param cls: TestCase Class
    """
    cls.tmp = tempfile.mkdtemp()
    cls.config = ScenarioConfig(seed=5, n_hcps=80)
    cls.panel = simulate_panel(cls.config, threads=1).panel


def handcrafted_panel(shares=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)), trend=1.0, tau_12=-1.5, tau_12c=1.0):
    """
    One HCP per (S2, S2c) pair at 10 in period 0; period 1 adds the trend and S tau exactly.
    """
    rows = []
    for i, (s2, s2c) in enumerate(shares):
        after = 10.0 + trend + s2 * tau_12 + s2c * tau_12c
        for period, outcome in ((0, 10.0), (1, after)):
            rows.append({
                'hcp_id': 'H{0:05d}'.format(i), 'period': period, 'ln_price': outcome, 'ln_subsidy': outcome,
                'ln_netcost': outcome, 's2': s2 if period else 0.0, 's2c': s2c if period else 0.0,
                'ln_speed': 2.0, 'hcp_type': 'T0', 'service_type': 'V0', 'state': 'S00', 'n_requests': 1,
                'speed_mbps': np.exp(2.0),
            })
    return pd.DataFrame(rows)


def write_text(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)
    return path


def read_text(path):
    with open(path, encoding='utf-8') as handle:
        return handle.read()


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)


class ConfigTest(SimpleTestCase):
    """
    TestCase for scenario config files
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)
        super().tearDownClass()

    def test_minimal_config(self):
        """
        Test that omitted keys keep their defaults
        """
        config = parse_config(MINIMAL_CONFIG)
        self.assertEquals(config.n_hcps, 3)
        self.assertEquals(config.outcome_noise, 0.0)
        self.assertEquals(config.seed, 11)
        self.assertEquals(config.tau, ScenarioConfig(seed=0).tau)

    def test_config_text_parses_back(self):
        """
        Test that the written config parses to the same ScenarioConfig
        """
        config = ScenarioConfig(seed=3, n_hcps=50, demand_intercept=(80.0, 120.5), require_benefit=False,
                                trend_violation=1.5)
        self.assertEquals(parse_config(config_text(config)), config)
        self.assertEquals(parse_config(config_text(default_config())), default_config())

    def test_intervals_and_booleans(self):
        """
        Test interval and boolean values
        """
        config = parse_config('[demand]\ncost_range = 15, 25\n[switching]\nrequire_benefit = no\n')
        self.assertEquals(config.cost_range, (15.0, 25.0))
        self.assertFalse(config.require_benefit)

    def test_unknown_key(self):
        """
        Test that an unknown key names the field and its line
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[population]\nn_hcps = 10\n\n[panel]\nbogus = 1\n')
        self.assertEquals(raised.exception.field, 'panel.bogus')
        self.assertEquals(raised.exception.line, 5)
        self.assertIn('line 5', str(raised.exception))

    def test_unknown_section(self):
        """
        Test that an unknown section is rejected
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[market]\nsize = 3\n')
        self.assertEquals(raised.exception.field, 'market')
        self.assertEquals(raised.exception.line, 1)

    def test_not_a_number(self):
        """
        Test that a malformed number names its field and line
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[run]\nseed = 1\n[population]\nn_hcps = many\n')
        self.assertEquals(raised.exception.field, 'population.n_hcps')
        self.assertEquals(raised.exception.line, 4)

    def test_bad_boolean(self):
        """
        Test that a non-boolean require_benefit is rejected
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[switching]\nrequire_benefit = perhaps\n')
        self.assertEquals(raised.exception.field, 'switching.require_benefit')
        self.assertEquals(raised.exception.line, 2)

    def test_invalid_interval(self):
        """
        Test that an interval needs two numbers
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[mechanism]\ncap_fraction = 0.9\n')
        self.assertEquals(raised.exception.field, 'mechanism.cap_fraction')

    def test_key_outside_section(self):
        """
        Test that text before any section header is a parse error
        """
        with self.assertRaises(ConfigParse):
            parse_config('n_hcps = 3\n')

    def test_is_an_input_error(self):
        """
        Test that config errors exit with code 2
        """
        with self.assertRaises(ConfigParse) as raised:
            parse_config('[panel]\nbogus = 1\n')
        self.assertIsInstance(raised.exception, ValueError)
        self.assertEquals(raised.exception.exit_code, 2)

    def test_locate_keys(self):
        """
        Test line lookup of sections and keys
        """
        where = locate_keys('[run]\nSeed = 1\n\n[panel]\ntrend: 0.1\n')
        self.assertEquals(where[('run', None)], 1)
        self.assertEquals(where[('run', 'seed')], 2)
        self.assertEquals(where[('panel', 'trend')], 5)

    def test_load_config(self):
        """
        Test reading a config file and a missing one
        """
        path = write_text(self.tmp, 'minimal.ini', MINIMAL_CONFIG)
        self.assertEquals(load_config(path).n_hcps, 3)
        with self.assertRaises(IoFailure):
            load_config(os.path.join(self.tmp, 'absent.ini'))


class ScenarioConfigFormTest(SimpleTestCase):
    """
    TestCase for ScenarioConfigForm
    """

    def test_valid_form(self):
        """
        Test that a valid form builds the scenario
        """
        form = ScenarioConfigForm(data={'n_hcps': '12', 'cap_fraction': '0.9, 0.95'})
        self.assertTrue(form.is_valid())
        self.assertEquals(form.scenario.n_hcps, 12)
        self.assertEquals(form.scenario.cap_fraction, (0.9, 0.95))
        self.assertEquals(form.scenario.seed, 0)

    def test_out_of_range_values(self):
        """
        Test that values the scenario rejects become field errors
        """
        form = ScenarioConfigForm(data={'tau': '1.5'})
        self.assertFalse(form.is_valid())
        self.assertIn('tau', form.errors)

    def test_negative_count(self):
        """
        Test that a negative HCP count is rejected
        """
        form = ScenarioConfigForm(data={'n_hcps': '-1'})
        self.assertFalse(form.is_valid())
        self.assertIn('n_hcps', form.errors)


class PanelCsvTest(SimpleTestCase):
    """
    TestCase for panel CSV reading and writing
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)
        super().tearDownClass()

    def written(self, panel, name):
        path = os.path.join(self.tmp, name)
        write_panel(panel, path)
        return path

    def corrupt(self, name, old, new, count=1):
        """
        Panel CSV text of the handcrafted panel with one substitution.
        """
        text = read_text(self.written(handcrafted_panel(), name))
        self.assertIn(old, text)
        return write_text(self.tmp, name, text.replace(old, new, count))

    def test_byte_stable_round_trip(self):
        """
        Test that reading a written panel and writing it again reproduces the bytes
        """
        first = self.written(self.panel, 'first.csv')
        panel = read_panel(first)
        second = self.written(panel, 'second.csv')
        with open(first, 'rb') as a, open(second, 'rb') as b:
            self.assertEquals(a.read(), b.read())
        self.assertEquals(len(panel), len(self.panel))

    def test_seventeen_digits(self):
        """
        Test that floats are written with 17 significant digits
        """
        panel = handcrafted_panel()
        panel['ln_speed'] = 0.1
        text = read_text(self.written(panel, 'digits.csv'))
        self.assertIn('0.10000000000000001', text)
        self.assertEquals(read_panel(os.path.join(self.tmp, 'digits.csv'))['ln_speed'].iloc[0], 0.1)

    def test_sorted_and_typed(self):
        """
        Test that rows are sorted by (hcp_id, period) and typed on reading
        """
        panel = handcrafted_panel().iloc[::-1]
        read = read_panel(self.written(panel, 'sorted.csv'))
        self.assertEquals(list(read['hcp_id']), ['H00000', 'H00000', 'H00001', 'H00001', 'H00002', 'H00002'])
        self.assertEquals(list(read['period']), [0, 1, 0, 1, 0, 1])
        self.assertEquals(read['n_requests'].dtype, np.int64)

    def test_missing_value(self):
        """
        Test that an empty cell names its row and column
        """
        path = self.corrupt('missing.csv', '\nH00001,0,10,', '\nH00001,0,,')
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(path)
        self.assertEquals(raised.exception.row, 3)
        self.assertEquals(raised.exception.column, 'ln_price')

    def test_period_two(self):
        """
        Test that periods other than 0 and 1 are rejected
        """
        path = self.corrupt('period.csv', '\nH00002,1,', '\nH00002,2,')
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(path)
        self.assertEquals(raised.exception.row, 6)
        self.assertEquals(raised.exception.column, 'period')

    def test_share_above_one(self):
        """
        Test that a share above one is rejected
        """
        panel = handcrafted_panel()
        panel.loc[3, 's2'] = 1.5
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(self.written(panel, 'share.csv'))
        self.assertEquals(raised.exception.row, 4)
        self.assertEquals(raised.exception.column, 's2')

    def test_shares_sum_above_one(self):
        """
        Test that S2 + S2c above one is rejected
        """
        panel = handcrafted_panel()
        panel.loc[5, 's2'] = 0.5
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(self.written(panel, 'sum.csv'))
        self.assertEquals(raised.exception.row, 6)
        self.assertEquals(raised.exception.column, 's2c')

    def test_not_a_number(self):
        """
        Test that a non-numeric cell is rejected
        """
        path = self.corrupt('text.csv', '\nH00001,0,10,', '\nH00001,0,ten,')
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(path)
        self.assertEquals(raised.exception.column, 'ln_price')
        self.assertIn("'ten'", str(raised.exception))

    def test_unknown_column(self):
        """
        Test that extra columns are rejected on write and on read
        """
        panel = handcrafted_panel()
        panel['colour'] = 'red'
        with self.assertRaises(SchemaViolation) as raised:
            write_panel(panel, os.path.join(self.tmp, 'colour.csv'))
        self.assertEquals(raised.exception.column, 'colour')
        path = os.path.join(self.tmp, 'colour_raw.csv')
        write_frame(panel, path)
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(path)
        self.assertEquals(raised.exception.column, 'colour')

    def test_missing_column(self):
        """
        Test that a required column must be present
        """
        path = os.path.join(self.tmp, 'no_state.csv')
        write_frame(handcrafted_panel().drop(columns='state'), path)
        with self.assertRaises(SchemaViolation) as raised:
            read_panel(path)
        self.assertEquals(raised.exception.column, 'state')

    def test_empty_file(self):
        """
        Test that an empty file is a schema violation
        """
        with self.assertRaises(SchemaViolation):
            read_panel(write_text(self.tmp, 'empty.csv', ''))

    def test_missing_file(self):
        """
        Test that a missing file is an IO failure
        """
        with self.assertRaises(IoFailure):
            read_panel(os.path.join(self.tmp, 'absent.csv'))


class RunManifestTest(TestCase):
    """
    TestCase for RunManifest
    """

    @classmethod
    def setUpTestData(cls):
        cls.manifest = RunManifest.objects.create(command='simulate', config={'n_hcps': 3}, seed=11, wall_time=1.5,
                                                  output_digests={'panel.csv': 'ab' * 32})

    def test_digest_set_on_save(self):
        """
        Test that the digest is computed when the manifest is saved
        """
        self.assertEquals(self.manifest.digest, manifest_digest({'n_hcps': 3}, 11, {'panel.csv': 'ab' * 32}))
        self.assertEquals(len(self.manifest.digest), 64)

    def test_digest_ignores_wall_time(self):
        """
        Test that wall time does not enter the digest
        """
        slower = RunManifest.objects.create(command='simulate', config={'n_hcps': 3}, seed=11, wall_time=99.0,
                                            output_digests={'panel.csv': 'ab' * 32})
        self.assertEquals(slower.digest, self.manifest.digest)

    def test_digest_depends_on_seed_and_outputs(self):
        """
        Test that the seed and the outputs enter the digest
        """
        self.assertNotEqual(manifest_digest({'n_hcps': 3}, 12, {'panel.csv': 'ab' * 32}), self.manifest.digest)
        self.assertNotEqual(manifest_digest({'n_hcps': 3}, 11, {'panel.csv': 'cd' * 32}), self.manifest.digest)

    def test_str_and_versions(self):
        """
        Test the string form and the recorded package versions
        """
        self.assertEquals(str(self.manifest), 'simulate - simulate - {0}'.format(self.manifest.digest[:12]))
        self.assertIn('numpy', self.manifest.module_versions)
        self.assertIn('subsidy_lab', self.manifest.module_versions)

    def test_list_view(self):
        """
        Test that the home page lists runs
        """
        response = self.client.get(reverse('home'))
        self.assertEquals(response.status_code, 200)
        self.assertContains(response, self.manifest.digest[:12])

    def test_detail_view(self):
        """
        Test the manifest detail page
        """
        response = self.client.get(reverse('manifest_detail', args=[self.manifest.pk]))
        self.assertEquals(response.status_code, 200)
        self.assertContains(response, 'panel.csv')
        self.assertEquals(self.client.get(reverse('manifest_detail', args=[self.manifest.pk + 100])).status_code,
                          404)

    def test_short_digest(self):
        """
        Test the short_digest filter
        """
        self.assertEquals(short_digest('0123456789abcdef'), '0123456789ab…')
        self.assertEquals(short_digest('0123', 12), '0123')
        self.assertEquals(short_digest(''), '')


class ReportsTest(SimpleTestCase):
    """
    TestCase for the rendered tables
    """

    def test_render_summary(self):
        """
        Test the pass/fail table
        """
        text = render_summary({'scenario': 'oster-anchor', 'passed': False, 'criteria': [
            {'name': 'delta', 'passed': True, 'detail': 'delta -3.78'},
            {'name': 'beta_star', 'passed': False, 'detail': 'beta* -1.70'},
        ]})
        self.assertIn('[PASS] delta: delta -3.78', text)
        self.assertIn('[FAIL] beta_star', text)
        self.assertTrue(text.rstrip().endswith('overall: FAIL'))

    def test_float_list(self):
        """
        Test comma lists and start:stop:num grids
        """
        self.assertEquals(float_list('0.5, 1'), (0.5, 1.0))
        self.assertEquals(float_list('0:2:5'), (0.0, 0.5, 1.0, 1.5, 2.0))
        with self.assertRaises(CommandError):
            float_list('a,b')


class CommandTest(TestCase):
    """
    TestCase for the simulate, estimate, diagnose and replicate commands
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        setup_test_data(cls)
        cls.config_path = write_text(cls.tmp, 'minimal.ini', MINIMAL_CONFIG)
        cls.handcrafted = os.path.join(cls.tmp, 'handcrafted.csv')
        write_panel(handcrafted_panel(), cls.handcrafted)
        cls.simulated = os.path.join(cls.tmp, 'simulated.csv')
        write_panel(cls.panel, cls.simulated)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)
        super().tearDownClass()

    def out(self, name):
        return os.path.join(self.tmp, name)

    def command(self, name, *args, **options):
        stdout = io.StringIO()
        call_command(name, *args, stdout=stdout, **options)
        return stdout.getvalue()

    def test_simulate_minimal_config(self):
        """
        Test that three HCPs give six panel rows and a stored manifest
        """
        output = self.command('simulate', config=self.config_path, out=self.out('sim'))
        panel = read_panel(self.out('sim/panel.csv'))
        self.assertEquals(len(panel), 6)
        self.assertEquals(sorted(set(panel['period'])), [0, 1])
        manifest = read_json(self.out('sim/manifest.json'))
        self.assertEquals(manifest['seed'], 11)
        self.assertEquals(sorted(manifest['output_digests']), ['ground_truth.json', 'panel.csv'])
        self.assertIn(manifest['digest'], output)
        self.assertTrue(RunManifest.objects.filter(command='simulate', digest=manifest['digest']).exists())

    def test_simulate_is_deterministic(self):
        """
        Test that reruns with the same seed give identical outputs and digests
        """
        self.command('simulate', config=self.config_path, out=self.out('again_1'))
        with override_settings(SUBSIDY_LAB_THREADS=4):
            self.command('simulate', config=self.config_path, out=self.out('again_2'))
        first = read_json(self.out('again_1/manifest.json'))
        second = read_json(self.out('again_2/manifest.json'))
        self.assertEquals(first['digest'], second['digest'])
        self.assertEquals(read_text(self.out('again_1/panel.csv')), read_text(self.out('again_2/panel.csv')))

    def test_simulate_seed_and_consortia(self):
        """
        Test the seed override and the consortium rows
        """
        self.command('simulate', config=self.config_path, seed=12, consortia=3, out=self.out('sim_12'))
        manifest = read_json(self.out('sim_12/manifest.json'))
        self.assertEquals(manifest['seed'], 12)
        self.assertEquals(manifest['config']['n_consortia'], 3)
        self.assertIn('consortia.csv', manifest['output_digests'])

    def test_simulate_bad_config(self):
        """
        Test that a config error exits with code 2
        """
        path = write_text(self.tmp, 'bad.ini', '[panel]\nbogus = 1\n')
        with self.assertRaises(CommandError) as raised:
            self.command('simulate', config=path, out=self.out('bad'))
        self.assertEquals(raised.exception.returncode, 2)
        self.assertIn('panel.bogus', str(raised.exception))

    def test_estimate_twfe(self):
        """
        Test that the exact panel reproduces its effects in the table and the records
        """
        output = self.command('estimate', panel=self.handcrafted, method='twfe-cont', out=self.out('twfe'))
        self.assertIn('Panel A: ln_price (twfe-cont)', output)
        self.assertIn('-1.5000', output)
        records = read_json(self.out('twfe/estimates.json'))
        terms = {term['term']: term['estimate'] for term in records[0]['terms']}
        self.assertAlmostEqual(terms['tau_12'], -1.5, places=9)
        self.assertAlmostEqual(terms['tau_12c'], 1.0, places=9)
        self.assertAlmostEqual(terms['contrast'], 2.5, places=9)
        frame = pd.read_csv(self.out('twfe/estimates.csv'))
        self.assertEquals(list(frame['term']), ['tau_12', 'tau_12c', 'contrast'])

    def test_estimate_all_outcomes(self):
        """
        Test one table panel per outcome
        """
        output = self.command('estimate', panel=self.simulated, method='pols', outcome='all', out=self.out('pols'))
        for label in ('Panel A: ln_price', 'Panel B: ln_subsidy', 'Panel C: ln_netcost'):
            self.assertIn(label, output)
        self.assertEquals(len(read_json(self.out('pols/estimates.json'))), 3)

    def test_estimate_dml_too_few_rows(self):
        """
        Test that ten folds on fifteen rows exit with code 2
        """
        shares = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 0.5)) * 2
        path = os.path.join(self.tmp, 'fifteen.csv')
        write_panel(handcrafted_panel(shares).iloc[:-1], path)
        with self.assertRaises(CommandError) as raised:
            self.command('estimate', panel=path, method='dml', k_folds=10, out=self.out('dml'))
        self.assertEquals(raised.exception.returncode, 2)
        self.assertIn('FoldTooSmall', str(raised.exception))

    def test_estimate_unknown_columns(self):
        """
        Test that an unknown outcome or covariate exits with code 2
        """
        with self.assertRaises(CommandError) as raised:
            self.command('estimate', panel=self.handcrafted, outcome='ln_quality', out=self.out('unknown'))
        self.assertEquals(raised.exception.returncode, 2)
        self.assertIn("column 'ln_quality'", str(raised.exception))
        with self.assertRaises(CommandError) as raised:
            self.command('estimate', panel=self.handcrafted, covariates='ln_speed,ln_colour', out=self.out('unknown'))
        self.assertEquals(raised.exception.returncode, 2)

    def test_estimate_missing_panel(self):
        """
        Test that a missing panel file exits with code 2
        """
        with self.assertRaises(CommandError) as raised:
            self.command('estimate', panel=self.out('absent.csv'), out=self.out('absent'))
        self.assertEquals(raised.exception.returncode, 2)
        self.assertIn('IoFailure', str(raised.exception))

    def test_diagnose_oster_inputs(self):
        """
        Test the Oster bound from direct inputs
        """
        self.command('diagnose', battery='oster', oster_inputs=(-0.261, -1.249, 0.043, 0.387, 0.502),
                     out=self.out('oster'))
        report = read_json(self.out('oster/diagnose.json'))['oster']['inputs']
        self.assertAlmostEqual(report['delta'], -3.78, delta=0.1)
        self.assertTrue(-1.62 <= report['beta_star'] <= -1.54)

    def test_diagnose_oster_on_simulated_panel(self):
        """
        Test that the controls move every treatment coefficient on a default simulated panel
        """
        self.command('diagnose', panel=self.simulated, battery='oster', out=self.out('oster_panel'))
        summary = read_json(self.out('oster_panel/diagnose.json'))['oster']
        self.assertGreater(len(summary), 0)
        for record in summary.values():
            self.assertNotEqual(record['beta_short'], record['beta_long'])
            self.assertGreater(record['r2_long'], record['r2_short'])
            self.assertEquals(record['verdict'], 'Moves')

    def test_diagnose_manski(self):
        """
        Test that the Manski curve at g = 1 equals the DiD estimate and plot data is written
        """
        self.command('diagnose', panel=self.simulated, battery='manski', out=self.out('manski'))
        summary = read_json(self.out('manski/diagnose.json'))['manski']
        checked = 0
        for margin in ('P2', 'P2c'):
            if 'skipped' in summary[margin]:
                continue
            self.assertAlmostEqual(summary[margin]['robust_at_1'], summary[margin]['beta_did'], places=9)
            plot = pd.read_csv(self.out('manski/manski_{0}_plot.csv'.format(margin)))
            self.assertEquals(list(plot.columns), ['x', 'fit', 'lo', 'hi'])
            self.assertEquals(len(plot), 21)
            checked += 1
        self.assertGreater(checked, 0)

    def test_diagnose_needs_inputs(self):
        """
        Test that the hump without consortium rows, or a panel item without a panel, exits with code 2
        """
        with self.assertRaises(CommandError) as raised:
            self.command('diagnose', battery='hump', out=self.out('hump'))
        self.assertEquals(raised.exception.returncode, 2)
        with self.assertRaises(CommandError) as raised:
            self.command('diagnose', battery='cooks', out=self.out('cooks'))
        self.assertEquals(raised.exception.returncode, 2)
        with self.assertRaises(CommandError) as raised:
            self.command('diagnose', panel=self.simulated, battery='astrology', out=self.out('astrology'))
        self.assertEquals(raised.exception.returncode, 2)

    def test_numerical_failure_exit_code(self):
        """
        Test that numerical failures exit with code 3
        """
        class Failing(LabCommand):
            def run(self, *args, **options):
                raise Separation('perfect prediction')

        with self.assertRaises(CommandError) as raised:
            Failing().handle()
        self.assertEquals(raised.exception.returncode, 3)
        self.assertIn('Separation: perfect prediction', str(raised.exception))

    def test_replicate_oster_anchor(self):
        """
        Test that the Oster anchor scenario passes
        """
        output = self.command('replicate', 'oster-anchor', out=self.out('anchor'))
        summary = read_json(self.out('anchor/summary.json'))
        self.assertTrue(summary['passed'])
        self.assertIn('overall: PASS', output)
        manifest = read_json(self.out('anchor/manifest.json'))
        self.assertEquals(manifest['scenario'], 'oster-anchor')
        self.assertIn('summary.json', manifest['output_digests'])

    def test_replicate_closed_form(self):
        """
        Test closed forms against direct search, deterministic across thread counts
        """
        self.command('replicate', 'closed-form', replications=5, out=self.out('closed_1'))
        with override_settings(SUBSIDY_LAB_THREADS=3):
            self.command('replicate', 'closed-form', replications=5, out=self.out('closed_2'))
        summary = read_json(self.out('closed_1/summary.json'))
        self.assertTrue(summary['passed'])
        self.assertEquals(summary['replications'], 5)
        self.assertEquals(read_json(self.out('closed_1/manifest.json'))['digest'],
                          read_json(self.out('closed_2/manifest.json'))['digest'])

    def test_replicate_dominance(self):
        """
        Test that the provider prefers the consortium price to the cap
        """
        self.command('replicate', 'dominance-sweep', replications=10, out=self.out('dominance'))
        summary = read_json(self.out('dominance/summary.json'))
        criteria = {check['name']: check['passed'] for check in summary['criteria']}
        self.assertTrue(criteria['part_i'])
        self.assertTrue(criteria['part_ii'])

    def test_replicate_unknown_scenario(self):
        """
        Test that an unknown scenario exits with code 2
        """
        with self.assertRaises(CommandError) as raised:
            self.command('replicate', 'no-such-scenario', out=self.out('nothing'))
        self.assertEquals(raised.exception.returncode, 2)
        self.assertIn('UnknownScenario', str(raised.exception))


class EstimateRowsTest(SimpleTestCase):
    """
    TestCase for estimate rows of absent margins
    """

    def test_absent_margin(self):
        """
        Test that a margin nobody switched to is reported empty
        """
        result = twfe_fit(handcrafted_panel(shares=((0.0, 0.0), (1.0, 0.0), (0.5, 0.0))), TwfeSpec())
        rows = estimate_rows(result, 'twfe-cont', 'ln_price')
        by_term = {row['term']: row for row in rows}
        self.assertAlmostEqual(by_term['tau_12']['estimate'], -1.5, places=9)
        self.assertTrue(np.isnan(by_term['tau_12c']['estimate']))
        self.assertIn('Panel A', render_estimates(rows))
