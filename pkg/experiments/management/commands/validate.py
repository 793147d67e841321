from experiments.config import dump_config, parse_config
from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Validate a config file without running it'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Flat dotted key=value config file')
        parser.add_argument(
            '--set', action='append', default=[], metavar='KEY=VALUE', dest='overrides',
            help='Override one dotted config key; may be repeated'
        )
        parser.add_argument('--show', action='store_true', help='Print the config with every default filled in')

    def run(self, *args, **options):
        spec = parse_config(options['config'], self.overrides(options))
        if options['show']:
            self.stdout.write(dump_config(spec), ending='')
        swept = ', '.join(spec.swept_keys) or 'nothing'
        self.stdout.write(self.style.SUCCESS(f'Config OK: {spec.size} grid point(s), sweeping {swept}'))
