#!/usr/bin/env python3

from __future__ import annotations

import argparse
import logging
import logging.config
import signal
import sys

from spsnn.config import load_run_config
from spsnn.default import ConfigError, SpSNNException, get_config, user_path
from spsnn.trainer import Trainer

logging.config.dictConfig(get_config('logging'))


def main() -> None:
    parser = argparse.ArgumentParser(description='Train a spiking network with learnable neuron positions.')
    parser.add_argument('--config', required=True, type=user_path, help='Run configuration (JSON).')
    parser.add_argument('--out', required=True, type=user_path, help='Output directory.')
    parser.add_argument('--seed', type=int, default=None, help='Overrides the seed of the configuration.')
    args = parser.parse_args()

    try:
        config = load_run_config(args.config, seed=args.seed)
        trainer = Trainer(config, args.out)
        signal.signal(signal.SIGTERM, lambda signum, frame: trainer.stop())
        trainer.run()
    except ConfigError as e:
        print(f'Invalid configuration ({e.key}): {e}', file=sys.stderr)
        sys.exit(2)
    except SpSNNException as e:
        print(f'Training failed: {e}', file=sys.stderr)
        sys.exit(1)
    summary = trainer.summary()
    print(f'Test accuracy: {summary.test_accuracy:.4f} ({summary.param_count} parameters)')


if __name__ == '__main__':
    main()
