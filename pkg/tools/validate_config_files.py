#!/usr/bin/env python3

import argparse
import json
import logging
import logging.config

from pathlib import Path
from typing import Any

from spsnn.default import ConfigError, get_config, get_homedir

logging.config.dictConfig(get_config('logging'))
logger = logging.getLogger('Config validator')

CONFIG_FILES = ['generic', 'run']


def _paths(file_name: str) -> tuple[Path, Path]:
    config_dir = get_homedir() / 'config'
    return config_dir / f'{file_name}.json.sample', config_dir / f'{file_name}.json'


def _compatible(key: str, value: Any, sample: Any) -> bool:
    if key == 'dimensions' and value == 'inf':
        return True
    if isinstance(sample, float) and not isinstance(value, bool):
        return isinstance(value, (int, float))
    return isinstance(value, type(sample))


def validate_config_file(file_name: str) -> bool:
    """The user file must only hold documented sample keys, with the sample's types."""
    sample_path, user_path = _paths(file_name)
    sample = json.loads(sample_path.read_text())
    notes = sample.get('_notes', {})
    for key in sample:
        if key != '_notes' and key not in notes:
            raise ConfigError(f'Documentation missing for {key} in {sample_path.name}', key=key)

    if not user_path.exists():
        logger.info(f'{user_path.name} does not exist, creating it from the sample.')
        user_path.write_text(json.dumps(sample, indent=2, sort_keys=True))
    user = json.loads(user_path.read_text())

    for key, default in sample.items():
        if key == '_notes':
            continue
        if user.get(key) is None:
            logger.warning(f'{key} missing in {user_path.name}, the sample value {default!r} is used.')
        elif not _compatible(key, user[key], default):
            raise ConfigError(f'{key} in {user_path.name} is a {type(user[key]).__name__} ({user[key]!r}), '
                              f'the sample has a {type(default).__name__} ({default!r})', key=key)

    unknown = sorted(set(user) - set(sample))
    if unknown:
        raise ConfigError(f'{", ".join(unknown)} not in {sample_path.name}, compare it with {user_path.name}.',
                          key=unknown[0])
    return True


def update_user_configs() -> bool:
    """Copy the sample entries missing from the user files. True if anything changed."""
    changed = False
    for file_name in CONFIG_FILES:
        sample_path, user_path = _paths(file_name)
        sample = json.loads(sample_path.read_text())
        try:
            user = json.loads(user_path.read_text())
        except (OSError, json.JSONDecodeError):
            user = {}
        missing = [key for key in sample if key != '_notes' and user.get(key) is None]
        for key in missing:
            print(f'{key} was missing in {file_name}, adding it ({sample["_notes"][key]})')
            user[key] = sample[key]
        if missing:
            changed = True
            user_path.write_text(json.dumps(user, indent=2, sort_keys=True))
    return changed


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Check the config files.')
    parser.add_argument('--check', default=False, action='store_true',
                        help='Check that the user configs match the samples.')
    parser.add_argument('--update', default=False, action='store_true',
                        help='Add the sample entries missing from the user configs.')
    args = parser.parse_args()

    if args.check:
        for file_name in CONFIG_FILES:
            if validate_config_file(file_name):
                print(f'The entries in {_paths(file_name)[1]} are valid.')

    if args.update:
        if not update_user_configs():
            print('No updates needed in the user config files.')
