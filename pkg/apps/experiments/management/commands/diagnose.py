"""
Condition numbers, echo-state checks, perturbation traces and state
convergence of a saved model
"""
from django.core.management.base import BaseCommand

from apps.experiments.serializers import DIAGNOSTIC_KINDS
from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Run a diagnostic on a saved model and write <kind>.csv'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--model', required=True, help='Model file written by train')
        parser.add_argument('--kind', choices=DIAGNOSTIC_KINDS, default='condition')

    @handle_command_errors
    def handle(self, *args, **options):
        service = build_service(options)
        path = service.diagnose(options['model'], options['kind'])
        self.stdout.write(self.style.SUCCESS(f"{options['kind']} written to {path}"))
