env_global_name: str = 'SPSNN_HOME'
threads_env_name: str = 'SPSNN_THREADS'

from .exceptions import SpSNNException  # noqa

# NOTE: the imports below are there to avoid too long paths when importing the
# classes/methods in the rest of the project while keeping all that in a subdirectory
# and allow to update them easily.
# You should not have to change anything in this file below this line.

import os  # noqa

from .abstractmanager import AbstractManager  # noqa

from .exceptions import (MissingEnv, CreateDirectoryException, ConfigError, SimulationError,  # noqa
                         GradientError, SpikeFileError, CheckpointError)

from .helpers import get_homedir, load_configs, get_config, safe_create_dir, get_threads, user_path  # noqa

os.chdir(get_homedir())

__all__ = [
    'AbstractManager',
    'SpSNNException',
    'MissingEnv',
    'CreateDirectoryException',
    'ConfigError',
    'SimulationError',
    'GradientError',
    'SpikeFileError',
    'CheckpointError',
    'get_homedir',
    'load_configs',
    'get_config',
    'safe_create_dir',
    'get_threads',
    'user_path',
]
