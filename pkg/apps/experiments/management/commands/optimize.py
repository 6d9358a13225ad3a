"""
Genetic search over per-layer (IS, SR, γ) with validation RMSE as fitness
"""
from django.core.management.base import BaseCommand

from apps.shared.exceptions import handle_command_errors

from ._common import add_config_arguments, build_service


class Command(BaseCommand):
    help = 'Search hyperparameters with the GA and write best_hyperparameters.json'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument(
            '--resume',
            action='store_true',
            help='Continue from ga_checkpoint.json in the output directory'
        )
        parser.add_argument(
            '--profile',
            choices=['full', 'desk'],
            default=None,
            help='Shortcut for --set optimizer.profile=NAME'
        )

    @handle_command_errors
    def handle(self, *args, **options):
        if options['profile']:
            options['overrides'] = list(options['overrides']) + [f"optimizer.profile={options['profile']}"]
        service = build_service(options)
        ga = service.ga_config()
        self.stdout.write(
            f"GA: population {ga.population}, generations {ga.generations}, seed {ga.seed}"
            + (' (resuming)' if options['resume'] else '')
        )
        best = service.optimize(resume=options['resume'])

        self.stdout.write(f"Best validation RMSE: {best['fitness']:.6e} after {best['generations_run']} generations")
        for index, layer in enumerate(best['hyperparameters'], start=1):
            self.stdout.write(
                f"  layer {index}: IS={layer['input_scaling']:.4f} "
                f"SR={layer['spectral_radius']:.4f} leak={layer['leak_rate']:.4f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Written to {service.output_dir / 'best_hyperparameters.json'}"))
