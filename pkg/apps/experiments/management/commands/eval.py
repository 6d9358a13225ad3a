"""
Evaluate a saved model on a split of the configured task
"""
import json

from django.core.management.base import BaseCommand

from apps.experiments.services import format_table
from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Score a saved model file on the configured task'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--model', required=True, help='Model file written by train')
        parser.add_argument(
            '--split',
            choices=['train', 'validate', 'test'],
            default=None,
            help='Split to score (default: run.evaluate_split)'
        )
        parser.add_argument('--json', action='store_true', help='Print the report as JSON')

    @handle_command_errors
    def handle(self, *args, **options):
        service = build_service(options)
        report = service.evaluate(options['model'], options['split'])
        if options['json']:
            self.stdout.write(json.dumps(report, indent=2))
            return
        self.stdout.write(format_table([report], ['split', 'rmse', 'nrmse', 'mape', 'n']))
