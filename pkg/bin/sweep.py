#!/usr/bin/env python3

from __future__ import annotations

import argparse
import asyncio
import csv
import logging
import logging.config
import signal
import sys
from asyncio import Future
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.table import Table

from spsnn.config import RunConfig, load_run_config
from spsnn.default import AbstractManager, ConfigError, SpSNNException, get_config, get_threads, user_path
from spsnn.trainer import RunSummary, summarize, train_run

logging.config.dictConfig(get_config('logging'))

AXES = {'dimension': 'dimensions', 'hidden': 'n_hidden', 'sparsity': 'sparsity'}
AGGREGATE_COLUMNS = ('axis', 'value', 'mode', 'runs', 'median', 'q25', 'q75', 'param_count')


def parse_value(axis: str, raw: str) -> Any:
    try:
        if axis == 'dimension':
            return 'inf' if raw == 'inf' else int(raw)
        if axis == 'hidden':
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f'Invalid value {raw!r} for the {axis} axis', key=AXES[axis])


def sweep_points(base: RunConfig, axis: str, values: list[Any]) -> list[tuple[Any, str, RunConfig]]:
    """(value, mode, config) per point; sparsity values > 0 run both pruning modes."""
    points: list[tuple[Any, str, RunConfig]] = []
    for value in values:
        if axis == 'sparsity':
            modes = ('dynamic', 'static') if value > 0 else ('none', )
            for mode in modes:
                points.append((value, mode, base.replace(sparsity=value, sparsity_mode=mode)))
        else:
            points.append((value, base.sparsity_mode, base.replace(**{AXES[axis]: value})))
    return points


class SweepManager(AbstractManager):

    def __init__(self, config: RunConfig, out_dir: Path, axis: str, values: list[Any], seeds: list[int],
                 jobs: int | None=None, loglevel: int | None=None) -> None:
        super().__init__(out_dir, loglevel)
        self.script_name = 'sweep'
        self.axis = axis
        self.jobs = get_threads(jobs if jobs is not None else get_config('generic', 'jobs'))
        self.pending: list[tuple[tuple[Any, str], RunConfig, Path]] = []
        for value, mode, point in sweep_points(config, axis, values):
            for seed in seeds:
                run_dir = out_dir / f'{axis}_{value}_{mode}' / f'seed_{seed}'
                self.pending.append(((value, mode), point.replace(seed=seed), run_dir))
        self.results: dict[tuple[Any, str], list[RunSummary]] = {}
        for key, _, _ in self.pending:
            self.results.setdefault(key, [])
        self.runs: set[Future[RunSummary]] = set()
        self.executor = ProcessPoolExecutor(max_workers=self.jobs)
        self.logger.info(f'{len(self.pending)} runs over {len(self.results)} points, {self.jobs} in parallel')

    async def _to_run_forever_async(self) -> None:
        loop = asyncio.get_running_loop()
        while self.pending and len(self.runs) < self.jobs and not self.shutdown_requested():
            key, config, run_dir = self.pending.pop(0)
            run = loop.run_in_executor(self.executor, train_run, config, run_dir)
            run.add_done_callback(lambda done, key=key: self._collect(key, done))
            self.runs.add(run)
        if not self.runs:
            self.force_stop = True
            return
        await asyncio.wait(self.runs, return_when=asyncio.FIRST_COMPLETED)

    def _collect(self, key: tuple[Any, str], run: Future[RunSummary]) -> None:
        self.runs.discard(run)
        if run.cancelled():
            return
        if (error := run.exception()) is not None:
            self.logger.error(f'Run at {self.axis}={key[0]} ({key[1]}) failed: {error}')
            return
        self.results[key].append(run.result())

    async def _wait_to_finish_async(self) -> None:
        while self.runs:
            self.logger.info(f'Waiting for {len(self.runs)} run(s) to finish...')
            await asyncio.wait(self.runs, timeout=5)
        self.executor.shutdown()
        self.write_aggregate()

    def aggregate(self) -> list[dict[str, Any]]:
        rows: list[dict[str, Any]] = []
        for (value, mode), runs in self.results.items():
            if not runs:
                continue
            accuracies = [run.static_accuracy if mode == 'static' and run.static_accuracy is not None
                          else run.test_accuracy for run in runs]
            median, q25, q75 = summarize(accuracies)
            param_count, _, _ = summarize([float(run.param_count) for run in runs])
            rows.append({'axis': self.axis, 'value': value, 'mode': mode, 'runs': len(runs), 'median': median,
                         'q25': q25, 'q75': q75, 'param_count': int(param_count)})
        return rows

    def write_aggregate(self) -> None:
        rows = self.aggregate()
        with (self.run_dir / 'sweep.csv').open('w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=AGGREGATE_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        table = Table(title=f'Sweep over {self.axis}')
        for column in AGGREGATE_COLUMNS[1:]:
            table.add_column(column, justify='right')
        for row in rows:
            table.add_row(*(f'{row[c]:.4f}' if isinstance(row[c], float) else str(row[c])
                            for c in AGGREGATE_COLUMNS[1:]))
        Console().print(table)


def main() -> None:
    parser = argparse.ArgumentParser(description='Train over a grid of dimensions, hidden sizes or sparsities.')
    parser.add_argument('--config', required=True, type=user_path, help='Base run configuration.')
    parser.add_argument('--axis', required=True, choices=list(AXES))
    parser.add_argument('--values', required=True, help='Comma separated, e.g. 0,1,2,3,inf')
    parser.add_argument('--seeds', type=int, default=5, help='Seeds 0 to N-1 per point.')
    parser.add_argument('--jobs', type=int, default=None, help='Parallel runs (capped by SPSNN_THREADS).')
    parser.add_argument('--out', required=True, type=user_path, help='Output directory.')
    args = parser.parse_args()

    try:
        config = load_run_config(args.config)
        values = [parse_value(args.axis, raw.strip()) for raw in args.values.split(',') if raw.strip()]
        p = SweepManager(config, args.out, args.axis, values, list(range(args.seeds)), args.jobs)
    except ConfigError as e:
        print(f'Invalid configuration ({e.key}): {e}', file=sys.stderr)
        sys.exit(2)
    except SpSNNException as e:
        print(f'Sweep failed: {e}', file=sys.stderr)
        sys.exit(1)

    loop = asyncio.new_event_loop()
    loop.add_signal_handler(signal.SIGTERM, lambda: loop.create_task(p.stop_async()))
    try:
        loop.run_until_complete(p.run_async())
    finally:
        loop.close()


if __name__ == '__main__':
    main()
