from runs import pipeline
from runs.csv_io import file_digest, read_panel
from runs.management.base import LabCommand, comma_list
from estimators.dml import LEARNERS


class Command(LabCommand):
    help = 'Estimate switching effects on a panel CSV and write estimates.csv, estimates.json and estimates.txt'

    def add_arguments(self, parser):
        parser.add_argument('--panel', required=True, help='panel CSV')
        parser.add_argument('--method', default='twfe-cont', choices=pipeline.METHODS + ('all',))
        parser.add_argument('--outcome', default='ln_price', help="outcome column, or 'all' for the three outcomes")
        parser.add_argument('--k-folds', type=int, default=10, help='cross-fitting folds for dml')
        parser.add_argument('--learner', default='forest', choices=LEARNERS, help='nuisance learner for dml')
        parser.add_argument('--covariates', default='ln_speed', help='comma-separated covariate columns')
        parser.add_argument('--seed', type=int, default=0, help='fold and forest seed for dml')
        parser.add_argument('--out', help='output directory (default SUBSIDY_LAB_OUTPUT_DIR)')

    def run(self, *args, **options):
        panel = read_panel(options['panel'])
        methods = pipeline.METHODS if options['method'] == 'all' else (options['method'],)
        outcomes = pipeline.outcome_list(options['outcome'])
        covariates = comma_list(options['covariates'])
        recorder = pipeline.RunRecorder('estimate', options['out'])
        _, table = pipeline.estimate(panel, methods, outcomes, recorder, covariates=covariates,
                                     k_folds=options['k_folds'], seed=options['seed'], learner=options['learner'])
        recorder.finish({'panel': file_digest(options['panel']), 'methods': list(methods), 'outcomes': outcomes,
                         'covariates': list(covariates), 'k_folds': options['k_folds'],
                         'learner': options['learner']}, seed=options['seed'])
        self.stdout.write(table)
