"""
Train R independent repetitions of the configured Deep-ESN and report
mean ± standard deviation of every metric
"""
from django.core.management.base import BaseCommand

from apps.experiments.services import format_table, load_hyperparameters, summary_rows
from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Train and evaluate the configured model over several seeded repetitions'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument(
            '--hyperparameters',
            default=None,
            help='best_hyperparameters.json written by optimize (overrides the config section)'
        )
        parser.add_argument(
            '--repetitions',
            type=int,
            default=None,
            help='Shortcut for --set run.repetitions=N'
        )

    @handle_command_errors
    def handle(self, *args, **options):
        if options['repetitions'] is not None:
            options['overrides'] = list(options['overrides']) + [f"run.repetitions={options['repetitions']}"]
        service = build_service(options)
        hyperparameters = None
        if options['hyperparameters']:
            hyperparameters = load_hyperparameters(options['hyperparameters'])

        self.stdout.write(f"Training '{service.config['name']}' into {service.output_dir}")
        report = service.train(hyperparameters)

        self.stdout.write(format_table(summary_rows(report), ['metric', 'mean', 'std', 'runs']))
        if report['failures']:
            self.stdout.write(self.style.WARNING(f"{report['failures']} repetition(s) failed and were excluded:"))
            for row in report['repetitions']:
                if row['status'] != 'ok':
                    self.stdout.write(f"  - repetition {row['repetition']} (seed {row['seed']}): {row['error']}")
        self.stdout.write(self.style.SUCCESS(f"Report written to {service.output_dir / 'report.json'}"))
