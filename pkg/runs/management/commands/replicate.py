from runs.management.base import LabCommand
from runs.reports import render_summary
from runs.scenarios import SCENARIOS, run_scenario


class Command(LabCommand):
    help = 'Run a registered scenario end to end and write summary.json and summary.txt'

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='one of: {0}'.format(', '.join(SCENARIOS)))
        parser.add_argument('--out', help='output directory (default SUBSIDY_LAB_OUTPUT_DIR/<scenario>)')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--replications', type=int, help='override the scenario replication count')

    def run(self, *args, **options):
        summary, manifest = run_scenario(options['scenario'], out_dir=options['out'], seed=options['seed'],
                                         replications=options['replications'])
        self.stdout.write(render_summary(summary))
        self.stdout.write('manifest digest {0}'.format(manifest.digest))
