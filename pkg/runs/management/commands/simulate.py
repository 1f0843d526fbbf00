from runs import pipeline
from runs.config import default_config, load_config
from runs.csv_io import write_frame
from runs.management.base import LabCommand
from simulation.consortia import simulate_consortia


class Command(LabCommand):
    help = 'Simulate the two-period HCP panel and write panel.csv, ground_truth.json and manifest.json'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='scenario config (INI); defaults apply when omitted')
        parser.add_argument('--out', help='output directory (default SUBSIDY_LAB_OUTPUT_DIR)')
        parser.add_argument('--seed', type=int, help='override the [run] seed')
        parser.add_argument('--consortia', type=int, default=0,
                            help='also write this many consortia of consortium-year rows to consortia.csv')

    def run(self, *args, **options):
        config = load_config(options['config']) if options['config'] else default_config()
        config = pipeline.with_seed(config, options['seed'])
        recorder = pipeline.RunRecorder('simulate', options['out'])
        result = pipeline.simulate(config, recorder)
        snapshot = config.as_dict()
        if options['consortia'] > 0:
            rows = simulate_consortia(config, n_consortia=options['consortia'])
            write_frame(rows, recorder.path('consortia.csv'))
            recorder.add('consortia.csv')
            snapshot['n_consortia'] = options['consortia']
        manifest = recorder.finish(snapshot, seed=config.seed)
        self.stdout.write('{0} HCP-years written to {1}'.format(len(result.panel), recorder.path('panel.csv')))
        self.stdout.write('manifest digest {0}'.format(manifest.digest))
