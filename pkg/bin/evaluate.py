#!/usr/bin/env python3

from __future__ import annotations

import argparse
import logging.config
import sys

from rich.console import Console
from rich.table import Table

from spsnn import SpSNN
from spsnn.config import load_run_config
from spsnn.datasets import load_task_data, read_spike_file
from spsnn.default import ConfigError, SpSNNException, get_config, user_path

logging.config.dictConfig(get_config('logging'))


def main() -> None:
    parser = argparse.ArgumentParser(description='Evaluate a trained model, optionally after static pruning.')
    parser.add_argument('--checkpoint', required=True, type=user_path)
    parser.add_argument('--config', type=user_path, default=None,
                        help='Run configuration; defaults to config.json next to the checkpoint.')
    parser.add_argument('--dataset', default='test', help='"train", "test" or the path of a spike file.')
    parser.add_argument('--sp', type=float, default=0.0, help='Static pruning sparsity in [0, 1].')
    parser.add_argument('--save', type=user_path, default=None, help='Write the (pruned) model to this checkpoint.')
    args = parser.parse_args()

    console = Console()
    try:
        config = load_run_config(args.config) if args.config else None
        model = SpSNN.from_checkpoint(args.checkpoint, config)
        if not 0.0 <= args.sp <= 1.0:
            raise ConfigError(f'--sp must be in [0, 1], got {args.sp}', key='sparsity')
        if args.sp > 0:
            model = model.pruned(args.sp)
        if args.dataset in ('train', 'test'):
            train, test = load_task_data(model.config)
            data = train if args.dataset == 'train' else test
        else:
            data = read_spike_file(user_path(args.dataset))
        result = model.evaluate(data)
        if args.save:
            model.save(args.save)
    except ConfigError as e:
        print(f'Invalid configuration ({e.key}): {e}', file=sys.stderr)
        sys.exit(2)
    except SpSNNException as e:
        print(f'Evaluation failed: {e}', file=sys.stderr)
        sys.exit(1)

    console.print(f'Accuracy: {result.accuracy:.4f}, loss: {result.loss:.4f}, silent samples: {result.silent}')
    stats = Table(title='Model')
    stats.add_column('statistic')
    stats.add_column('value', justify='right')
    for key, value in model.stats().items():
        stats.add_row(key, f'{value:.4f}' if isinstance(value, float) else str(value))
    console.print(stats)
    n_classes = max(data.n_classes, model.config.n_outputs)
    confusion = Table(title='Confusion (rows: label, columns: prediction)')
    confusion.add_column('')
    for c in range(n_classes):
        confusion.add_column(str(c), justify='right')
    for c, row in enumerate(result.confusion(n_classes)):
        confusion.add_row(str(c), *(str(v) for v in row))
    console.print(confusion)


if __name__ == '__main__':
    main()
