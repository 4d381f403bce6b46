#!/usr/bin/env python3

from __future__ import annotations

import logging
import os
from abc import ABC
from pathlib import Path

from .helpers import get_config, safe_create_dir

SHUTDOWN_FILE = 'shutdown'


class AbstractManager(ABC):
    """Base class of the long-running jobs (training runs, sweeps).

    A job owns a run directory and repeats one unit of work (an epoch, a batch of sweep runs) until
    it is done. Dropping a ``shutdown`` file in the run directory (see ``bin/shutdown.py``) or
    sending SIGTERM stops it between two units.
    """

    script_name: str

    def __init__(self, run_dir: Path, loglevel: int | str | None=None):
        self.loglevel: int | str = loglevel if loglevel is not None else get_config('generic', 'loglevel') or logging.INFO
        self.logger = logging.getLogger(f'{self.__class__.__name__}')
        self.logger.setLevel(self.loglevel)
        self.run_dir = run_dir
        safe_create_dir(self.run_dir)
        self.logger.debug(f'{self.__class__.__name__} writes to {self.run_dir}')
        self.force_stop = False

    @property
    def pid_file(self) -> Path:
        return self.run_dir / f'{self.script_name}.pid'

    @staticmethod
    def is_running(run_dir: Path) -> list[tuple[str, int]]:
        """(script, pid) of the live jobs in ``run_dir``; stale pid files are removed."""
        running: list[tuple[str, int]] = []
        for pid_file in sorted(run_dir.glob('*.pid')):
            try:
                pid = int(pid_file.read_text().strip())
                os.kill(pid, 0)
            except (OSError, ValueError):
                pid_file.unlink(missing_ok=True)
                continue
            running.append((pid_file.stem, pid))
        return running

    @staticmethod
    def force_shutdown(run_dir: Path) -> None:
        (run_dir / SHUTDOWN_FILE).touch()

    def shutdown_requested(self) -> bool:
        return (self.run_dir / SHUTDOWN_FILE).exists()

    def _keep_going(self) -> bool:
        if self.force_stop:
            return False
        if self.shutdown_requested():
            self.logger.warning(f'Shutdown requested for {self.script_name} in {self.run_dir}.')
            return False
        return True

    def _to_run_forever(self) -> None:
        raise NotImplementedError('This method must be implemented by the child')

    def _wait_to_finish(self) -> None:
        self.logger.debug('Nothing to wait for.')

    def stop(self) -> None:
        self.force_stop = True

    def run(self) -> None:
        self.logger.info(f'Launching {self.script_name}')
        self.pid_file.write_text(str(os.getpid()))
        try:
            while self._keep_going():
                try:
                    self._to_run_forever()
                except Exception:
                    self.logger.exception(f'{self.script_name} failed.')
                    raise
        except KeyboardInterrupt:
            self.logger.warning(f'{self.script_name} killed by user.')
        finally:
            self._wait_to_finish()
            self.pid_file.unlink(missing_ok=True)
            self.logger.info(f'{self.script_name} stopped')

    async def _to_run_forever_async(self) -> None:
        raise NotImplementedError('This method must be implemented by the child')

    async def _wait_to_finish_async(self) -> None:
        self.logger.debug('Nothing to wait for.')

    async def stop_async(self) -> None:
        """Signal handler hook:
            loop.add_signal_handler(signal.SIGTERM, lambda: loop.create_task(p.stop_async()))
        """
        self.force_stop = True

    async def run_async(self) -> None:
        self.logger.info(f'Launching {self.script_name}')
        self.pid_file.write_text(str(os.getpid()))
        try:
            while self._keep_going():
                try:
                    await self._to_run_forever_async()
                except Exception:
                    self.logger.exception(f'{self.script_name} failed.')
                    raise
        except KeyboardInterrupt:
            self.logger.warning(f'{self.script_name} killed by user.')
        finally:
            await self._wait_to_finish_async()
            self.pid_file.unlink(missing_ok=True)
            self.logger.info(f'{self.script_name} stopped')
