import logging

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from ehcrsim.exceptions import ConfigurationError, SimulationError
from experiments.config import split_override
from experiments.serializers import format_errors

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
RUNTIME_ERROR = 3
IO_ERROR = 4


class ExperimentCommand(BaseCommand):
    """
    Subclasses implement ``run``; domain errors become CommandErrors with
    the documented exit codes.
    """

    def add_override_arguments(self, parser):
        parser.add_argument(
            '--set', action='append', default=[], metavar='KEY=VALUE', dest='overrides',
            help='Override one dotted config key; may be repeated, wins over the file'
        )
        parser.add_argument('--seed', type=int, help='Master seed (run.seed)')
        parser.add_argument('--iters', type=int, help='Monte Carlo replications per point (run.iterations)')

    def overrides(self, options):
        overrides = [split_override(text) for text in options.get('overrides', [])]
        if options.get('seed') is not None:
            overrides.append(('run.seed', str(options['seed'])))
        if options.get('iters') is not None:
            overrides.append(('run.iterations', str(options['iters'])))
        return overrides

    def run(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            self.run(*args, **options)
        except serializers.ValidationError as exc:
            self._fail(f'Invalid configuration: {format_errors(exc.detail)}', CONFIG_ERROR)
        except ConfigurationError as exc:
            self._fail(f'Invalid configuration: {exc}', CONFIG_ERROR)
        except SimulationError as exc:
            self._fail(f'Simulation failed: {exc}', RUNTIME_ERROR)
        except OSError as exc:
            self._fail(f'I/O error: {exc}', IO_ERROR)

    def _fail(self, message, returncode):
        logger.error(message)
        raise CommandError(message, returncode=returncode)
