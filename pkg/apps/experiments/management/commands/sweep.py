"""
Train and score one model per grid point along depth, encoder size or reservoir size
"""
from django.core.management.base import BaseCommand

from apps.experiments.services import format_table, load_hyperparameters
from apps.optimizer.services import SWEEP_AXES
from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Sweep one architecture axis and write sweep_<axis>.csv'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--axis', choices=sorted(SWEEP_AXES), default=None, help='Axis (default: sweep.axis)')
        parser.add_argument('--start', type=int, default=None)
        parser.add_argument('--stop', type=int, default=None, help='Inclusive')
        parser.add_argument('--step', type=int, default=None)
        parser.add_argument('--hyperparameters', default=None, help='best_hyperparameters.json to sweep around')

    @handle_command_errors
    def handle(self, *args, **options):
        service = build_service(options)
        hyperparameters = None
        if options['hyperparameters']:
            hyperparameters = load_hyperparameters(options['hyperparameters'])

        table = service.sweep(options['axis'], options['start'], options['stop'], options['step'], hyperparameters)
        axis = table.columns[0]
        self.stdout.write(format_table(table.to_dict('records'), [axis, 'status', 'rmse', 'nrmse', 'mape']))

        failed = int((table['status'] != 'ok').sum())
        if failed:
            self.stdout.write(self.style.WARNING(f'{failed} grid point(s) failed'))
        self.stdout.write(self.style.SUCCESS(f"Written to {service.output_dir / f'sweep_{axis}.csv'}"))
