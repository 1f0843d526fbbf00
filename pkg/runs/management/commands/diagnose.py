from diagnostics.manski import DEFAULT_G_GRID
from primitives.exceptions import InputError
from runs import pipeline
from runs.csv_io import file_digest, read_panel
from runs.management.base import LabCommand, comma_list, float_list


class Command(LabCommand):
    help = 'Run the robustness battery on a panel CSV; writes one report per diagnostic plus plot data'

    def add_arguments(self, parser):
        parser.add_argument('--panel', help='panel CSV')
        parser.add_argument('--battery', default='manski,oster,cooks,support,forms,boxcox,logit',
                            help='comma-separated subset of {0}'.format(', '.join(pipeline.BATTERY)))
        parser.add_argument('--g-grid', type=float_list, default=DEFAULT_G_GRID,
                            help='Manski g values: comma-separated, or start:stop:num')
        parser.add_argument('--consortium-rows', help='consortium-year CSV for the hump diagnostic')
        parser.add_argument('--oster-inputs', type=float_list,
                            help='beta_short,beta_long,r2_short,r2_long[,r2_max] instead of panel fits')
        parser.add_argument('--out', help='output directory (default SUBSIDY_LAB_OUTPUT_DIR)')

    def run(self, *args, **options):
        battery = comma_list(options['battery'])
        panel = read_panel(options['panel']) if options['panel'] else None
        rows = pipeline.read_consortium_rows(options['consortium_rows']) if options['consortium_rows'] else None
        oster_inputs = options['oster_inputs']
        if oster_inputs is not None and len(oster_inputs) not in (4, 5):
            raise InputError('--oster-inputs takes four or five numbers')
        recorder = pipeline.RunRecorder('diagnose', options['out'])
        _, text = pipeline.diagnose(panel, battery, recorder, g_grid=options['g_grid'], consortium_rows=rows,
                                    oster_inputs=oster_inputs)
        recorder.finish({
            'panel': file_digest(options['panel']) if options['panel'] else None,
            'consortium_rows': file_digest(options['consortium_rows']) if options['consortium_rows'] else None,
            'battery': list(battery), 'g_grid': list(options['g_grid']),
            'oster_inputs': list(oster_inputs) if oster_inputs is not None else None,
        })
        self.stdout.write(text)
