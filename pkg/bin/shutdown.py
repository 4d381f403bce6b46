#!/usr/bin/env python3

import argparse
import time

from spsnn.default import AbstractManager, user_path


def main() -> None:
    parser = argparse.ArgumentParser(description='Ask a running training or sweep to stop after the current epoch.')
    parser.add_argument('--out', required=True, type=user_path, help='Output directory of the running job.')
    args = parser.parse_args()

    run_dirs = [args.out] + sorted(path.parent for path in args.out.glob('**/train.pid'))
    for run_dir in run_dirs:
        AbstractManager.force_shutdown(run_dir)
    time.sleep(5)
    while True:
        running = [script for run_dir in run_dirs for script in AbstractManager.is_running(run_dir)]
        if not running:
            break
        print(running)
        time.sleep(5)
    for run_dir in run_dirs:
        (run_dir / 'shutdown').unlink(missing_ok=True)


if __name__ == '__main__':
    main()
