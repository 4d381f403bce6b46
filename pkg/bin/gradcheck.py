#!/usr/bin/env python3

from __future__ import annotations

import argparse
import logging.config
import sys

from rich.console import Console

from spsnn.config import load_run_config
from spsnn.default import ConfigError, SpSNNException, get_config, user_path
from spsnn.gradcheck import GradientCheck, render_report, reset_toy
from spsnn.simulator import REFERENCES

logging.config.dictConfig(get_config('logging'))


def main() -> None:
    parser = argparse.ArgumentParser(description='Compare engine gradients with finite differences.')
    parser.add_argument('--config', required=True, type=user_path, help='Run configuration of the checked network.')
    parser.add_argument('--tolerance', type=float, default=1e-2, help='Largest accepted relative error.')
    parser.add_argument('--engine', choices=['reverse', 'forward'], default='reverse')
    parser.add_argument('--reference', choices=REFERENCES, default='anchored',
                        help='"anchored" checks the engine against its own simulation, "resolved" against '
                             'exact event times (the error then includes the discretisation error).')
    parser.add_argument('--reset-toy', default=False, action='store_true',
                        help='Also check the single-neuron reset toy, with and without the reset rule.')
    args = parser.parse_args()

    console = Console()
    try:
        config = load_run_config(args.config)
        check = GradientCheck.from_config(config, engine=args.engine, reference=args.reference)
        report = check.run(tolerance=args.tolerance)
        render_report(report, console)
        passed = report.passed
        if args.reset_toy:
            for enabled in (True, False):
                toy = reset_toy(reset_tangent=enabled, reference=args.reference).run(tolerance=args.tolerance)
                console.print(f'Reset toy, reset rule {"on" if enabled else "off"}:')
                render_report(toy, console)
                # the check without the reset rule is expected to fail
                passed = passed and toy.passed == enabled
    except ConfigError as e:
        print(f'Invalid configuration ({e.key}): {e}', file=sys.stderr)
        sys.exit(2)
    except SpSNNException as e:
        print(f'Gradient check failed: {e}', file=sys.stderr)
        sys.exit(1)
    sys.exit(0 if passed else 1)


if __name__ == '__main__':
    main()
