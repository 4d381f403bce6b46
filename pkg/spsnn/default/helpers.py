#!/usr/bin/env python3

from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any

import psutil

from . import env_global_name, threads_env_name
from .exceptions import ConfigError, CreateDirectoryException, MissingEnv

configs: dict[str, dict[str, Any]] = {}
logger = logging.getLogger('Helpers')

REPOSITORY_ROOT = Path(__file__).resolve().parent.parent.parent
# taken before the package moves to the home directory
INVOCATION_DIR = Path.cwd()


def _read_dotenv(path: Path) -> None:
    """KEY=value lines, optionally quoted; existing variables win."""
    for line in path.read_text().splitlines():
        key, sep, value = line.strip().partition('=')
        if not sep or not key or key.startswith('#'):
            continue
        if len(value) >= 2 and value[0] == value[-1] and value[0] in ('"', "'"):
            value = value[1:-1]
        os.environ.setdefault(key, value)


@lru_cache(64)
def get_homedir() -> Path:
    if not os.environ.get(env_global_name) and (REPOSITORY_ROOT / '.env').exists():
        _read_dotenv(REPOSITORY_ROOT / '.env')
    if not os.environ.get(env_global_name):
        raise MissingEnv(f"{env_global_name} is missing. From the cloned repository, run: "
                         f"export {env_global_name}='{REPOSITORY_ROOT}'")
    return Path(os.environ[env_global_name])


def user_path(value: str | Path) -> Path:
    """A path given on the command line, relative to the directory the command was started from."""
    path = Path(value).expanduser()
    return path if path.is_absolute() else INVOCATION_DIR / path


@lru_cache(64)
def load_configs(path_to_config_files: str | Path | None=None) -> None:
    global configs
    if configs:
        return
    config_path = Path(path_to_config_files) if path_to_config_files else get_homedir() / 'config'
    if not config_path.is_dir():
        raise ConfigError(f'Configuration directory {config_path} is missing or not a directory.')
    configs = {path.stem: json.loads(path.read_text()) for path in config_path.glob('*.json')}


@lru_cache(64)
def get_config(config_type: str, entry: str | None=None, quiet: bool=False) -> Any:
    """An entry (or the whole file) of ``config/<config_type>.json``, falling back to the sample."""
    if not configs:
        load_configs()
    loaded = configs.get(config_type)
    if loaded is not None and (entry is None or entry in loaded):
        return loaded if entry is None else loaded[entry]
    if not quiet:
        missing = f'{entry} in {config_type}.json' if loaded is not None else f'{config_type}.json'
        logger.warning(f'Unable to find {missing}, falling back on the sample. '
                       'Run tools/validate_config_files.py --update.')
    sample = json.loads((get_homedir() / 'config' / f'{config_type}.json.sample').read_text())
    return sample if entry is None else sample[entry]


def safe_create_dir(to_create: Path) -> None:
    if to_create.exists() and not to_create.is_dir():
        raise CreateDirectoryException(f'The path {to_create} already exists and is not a directory')
    to_create.mkdir(parents=True, exist_ok=True)


def get_threads(requested: int | None=None) -> int:
    """Number of parallel workers, capped by SPSNN_THREADS (default: physical cores)."""
    cap_env = os.environ.get(threads_env_name)
    if cap_env:
        try:
            cap = int(cap_env)
        except ValueError:
            raise ConfigError(f'{threads_env_name} must be an integer, got {cap_env!r}', key=threads_env_name)
    else:
        cap = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    if requested is None or requested <= 0:
        return max(1, cap)
    return max(1, min(requested, cap))
