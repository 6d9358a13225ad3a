"""
Generate or ingest the series of an experiment and export it as CSV
"""
from django.core.management.base import BaseCommand

from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Export the configured dataset (series CSV, metadata sidecar, split-tagged task CSV)'

    def add_arguments(self, parser):
        add_config_arguments(parser)

    @handle_command_errors
    def handle(self, *args, **options):
        service = build_service(options)
        paths = service.export_dataset()
        for kind, path in paths.items():
            self.stdout.write(f'{kind}: {path}')
        self.stdout.write(self.style.SUCCESS('Dataset exported.'))
