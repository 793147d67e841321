from engine.runner import run_episode
from experiments.config import parse_config
from experiments.management.base import CONFIG_ERROR, ExperimentCommand
from experiments.sweeps import run_sweep, write_trace


class Command(ExperimentCommand):
    help = 'Run a configured experiment (one point or a sweep) and write the results as CSV'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Flat dotted key=value config file; defaults apply when omitted')
        self.add_override_arguments(parser)
        parser.add_argument('--out', help='Results CSV path; overrides output.path, stdout when neither is set')
        parser.add_argument('--trace', help='Write the per-slot trace of replication 0 to this CSV path')

    def run(self, *args, **options):
        spec = parse_config(options['config'], self.overrides(options))

        if options['trace']:
            if spec.size != 1:
                self._fail(f'--trace needs a single-point config, this one has {spec.size} points', CONFIG_ERROR)
            _, config = spec.grid[0]
            write_trace(options['trace'], run_episode(config, trace=True).trace)
            self.stdout.write(f"Trace of {config.episode_slots} slots written to {options['trace']}")

        out = options['out'] or spec.output_path
        summary = run_sweep(spec, out=out if out else self.stdout)
        console = self.stdout if out else self.stderr
        for line in summary.lines():
            console.write(line)
        if out:
            console.write(self.style.SUCCESS(f'Results written to {out}'))
