import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
os.environ.setdefault('SPSNN_HOME', str(ROOT))

from spsnn.config import RunConfig  # noqa: E402
from spsnn.network import Network, NetworkConfig  # noqa: E402
from spsnn.trainer import seeded_generators  # noqa: E402


@pytest.fixture
def root() -> Path:
    return ROOT


def small_config(**overrides) -> RunConfig:
    """A network small enough to simulate in a test, with weights that make it spike."""
    raw = {'task': 'gradcheck', 'topology': 'feedforward', 'n_inputs': 3, 'n_hidden': 5, 'n_outputs': 3,
           'dimensions': 2, 'dt': 0.1, 'duration': 20.0, 'input_window': 10.0, 'tau_mem': 10.0, 'tau_syn': 5.0,
           'weight_init_mean': 2.5, 'weight_init_std': 0.5, 'checkpoint_interval': 40, 'gradcheck_samples': 3,
           'batch_size': 3, 'seed': 3}
    raw.update(overrides)
    return RunConfig.from_dict(raw)


def build(config: RunConfig):
    network = Network(NetworkConfig.from_run_config(config))
    params = network.init_params(seeded_generators(config.seed)[0], config.weight_init_mean,
                                 config.weight_init_std, config.position_init_std, config.input_init)
    return network, params


@pytest.fixture
def config() -> RunConfig:
    return small_config()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
