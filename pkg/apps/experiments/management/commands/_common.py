"""
Arguments and config loading shared by the experiment commands
"""
from apps.experiments.services import ExperimentConfigLoader, ExperimentService


def add_config_arguments(parser):
    parser.add_argument('config', help='Path to an experiment config (JSON)')
    parser.add_argument(
        '--set',
        action='append',
        default=[],
        metavar='KEY.PATH=VALUE',
        dest='overrides',
        help='Override a config leaf by dotted path; may be repeated'
    )
    parser.add_argument(
        '--output-dir',
        default=None,
        help='Output directory (default: config output.directory, then DEEP_ESN_OUTPUT_DIR)'
    )
    parser.add_argument(
        '--workers',
        type=int,
        default=None,
        help='Worker threads for repetitions, sweep points and GA fitness (default: DEEP_ESN_MAX_WORKERS)'
    )


def build_service(options) -> ExperimentService:
    config = ExperimentConfigLoader.load(options['config'], options['overrides'])
    return ExperimentService(config, output_dir=options['output_dir'], max_workers=options['workers'])
