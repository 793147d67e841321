import csv
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple, Union

from engine.runner import monte_carlo
from engine.slots import SlotOutcome
from .config import ResultRow, SweepSpec, csv_header, format_value

logger = logging.getLogger(__name__)

Target = Union[str, Path, TextIO]

TRACE_COLUMNS = (
    'slot', 'kind', 'estimated', 'sensed', 'observations', 'accessed', 'd', 'true_state', 'ack', 'eta',
    'reward', 'e_est_total', 'e_s_total', 'e_ckt', 'e_tr', 'harvested', 'battery_before', 'battery_after',
    'unsensable',
)


@dataclass(frozen=True)
class SweepSummary:
    rows: Tuple[ResultRow, ...]
    elapsed: float

    @property
    def best(self) -> ResultRow:
        return max(self.rows, key=lambda row: row.mean_efficiency)

    @property
    def worst(self) -> ResultRow:
        return min(self.rows, key=lambda row: row.mean_efficiency)

    def lines(self) -> List[str]:
        def describe(row):
            where = ', '.join(f'{key}={format_value(value)}' for key, value in row.point) or 'base point'
            return f'{row.mean_efficiency:.6g} +/- {row.stderr:.2g} bits/s/Hz ({where})'
        return [
            f'Grid points: {len(self.rows)}',
            f'Runtime: {self.elapsed:.1f} s',
            f'Best: {describe(self.best)}',
            f'Worst: {describe(self.worst)}',
        ]


@contextmanager
def _opened(target: Target):
    if hasattr(target, 'write'):
        yield target
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        yield handle


def write_results(target: Target, swept_keys: Sequence[str], rows: Iterable[ResultRow]):
    with _opened(target) as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(csv_header(swept_keys))
        for row in rows:
            writer.writerow(row.csv_values())


def write_trace(target: Target, outcomes: Iterable[SlotOutcome]):
    def cell(value):
        if value is None:
            return ''
        if isinstance(value, tuple):
            return ';'.join(str(int(item)) for item in value)
        return format_value(value)

    with _opened(target) as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(TRACE_COLUMNS)
        for outcome in outcomes:
            writer.writerow([cell(getattr(outcome, column)) for column in TRACE_COLUMNS])


def run_sweep(spec: SweepSpec, out: Optional[Target] = None) -> SweepSummary:
    """
    Run every grid point with the sweep's master seed and write one CSV row
    per point in sweep order. ``out`` wins over the configured output path;
    with neither nothing is written.
    """
    started = time.monotonic()
    rows = []
    for index, (point, config) in enumerate(spec.grid, start=1):
        where = ', '.join(f'{key}={format_value(value)}' for key, value in point)
        logger.info(f"Grid point {index}/{spec.size}: {where or 'base'}")
        rows.append(ResultRow.from_result(point, config, monte_carlo(config)))

    target = out if out is not None else spec.output_path
    if target is not None:
        write_results(target, spec.swept_keys, rows)
        logger.info(f"Wrote {len(rows)} rows to {getattr(target, 'name', target)}")
    summary = SweepSummary(rows=tuple(rows), elapsed=time.monotonic() - started)
    logger.info(f"Sweep finished in {summary.elapsed:.1f} s")
    return summary
