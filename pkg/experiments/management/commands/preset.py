from pathlib import Path

from experiments.config import dump_config
from experiments.management.base import ExperimentCommand
from experiments.presets import FIGURE_PRESETS, emit_figure_preset
from experiments.sweeps import run_sweep


class Command(ExperimentCommand):
    help = 'Run (or emit the config of) one of the figure reproduction sweeps'

    def add_arguments(self, parser):
        parser.add_argument('name', choices=list(FIGURE_PRESETS), help='Figure preset')
        self.add_override_arguments(parser)
        parser.add_argument('--out', help='Results CSV path (default <name>.csv)')
        parser.add_argument('--emit-config', metavar='PATH', help='Write the preset as a config file and stop')

    def run(self, *args, **options):
        spec = emit_figure_preset(options['name'])
        overrides = self.overrides(options)
        if overrides:
            spec = spec.with_overrides(overrides)

        if options['emit_config']:
            path = Path(options['emit_config'])
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dump_config(spec))
            self.stdout.write(self.style.SUCCESS(f"Preset '{options['name']}' written to {path}"))
            return

        out = options['out'] or spec.output_path
        self.stdout.write(f"Preset '{options['name']}': {spec.size} grid points, {spec.base.iterations} iterations each")
        summary = run_sweep(spec, out=out)
        for line in summary.lines():
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f'Results written to {out}'))
