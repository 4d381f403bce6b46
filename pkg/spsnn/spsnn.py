#!/usr/bin/env python3

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .datasets import SpikeDataset
from .default import CheckpointError, get_config
from .network import Network, NetworkConfig
from .simulator import Classification, Simulator, classify
from .trainer import EvaluationResult, evaluate_dataset, seeded_generators, static_prune, weight_sparsity

Array = npt.NDArray[np.float64]
Params = dict[str, Array]


class SpSNN():
    """A configured network with its parameters, ready to simulate."""

    def __init__(self, config: RunConfig, params: Params | None=None, capacity: int | None=None) -> None:
        self.logger = logging.getLogger(f'{self.__class__.__name__}')
        self.logger.setLevel(get_config('generic', 'loglevel'))
        self.config = config
        self.network = Network(NetworkConfig.from_run_config(config))
        if params is None:
            params = self.network.init_params(seeded_generators(config.seed)[0], config.weight_init_mean,
                                              config.weight_init_std, config.position_init_std, config.input_init)
        expected = self.network.parameter_names()
        if sorted(params) != sorted(expected):
            raise CheckpointError(f'Parameters {sorted(params)} do not match the network ({sorted(expected)})')
        self.params = params
        self.capacity = capacity if capacity is not None else self.network.queue_capacity(params)
        self.simulator = Simulator(self.network, self.capacity)

    @classmethod
    def from_checkpoint(cls, path: Path, config: RunConfig | None=None) -> SpSNN:
        """Load a model; the configuration defaults to ``config.json`` next to the checkpoint."""
        if config is None:
            config = load_run_config(path.parent / 'config.json')
        checkpoint = load_checkpoint(path)
        if not math.isclose(checkpoint.dt, config.dt):
            raise CheckpointError(f'{path} was trained with dt={checkpoint.dt}, the configuration says {config.dt}')
        return cls(config, checkpoint.params, checkpoint.queue_capacity)

    def save(self, path: Path) -> None:
        save_checkpoint(path, self.params, self.network.parameter_names(), self.capacity, self.config.dt)

    def predict(self, data: SpikeDataset) -> Classification:
        predictions, silent = [], []
        for indices in data.batches(self.config.batch_size):
            trace = self.simulator.run_forward(self.params, data.input_batch(indices, self.config.dt,
                                                                              self.config.n_steps))
            result = classify(trace, self.params.get('readout'))
            predictions.append(result.predictions)
            silent.append(result.silent)
        return Classification(predictions=np.concatenate(predictions), silent=np.concatenate(silent))

    def evaluate(self, data: SpikeDataset) -> EvaluationResult:
        return evaluate_dataset(self.simulator, self.params, data, self.config)

    def pruned(self, sparsity: float) -> SpSNN:
        """A statically pruned copy."""
        params = static_prune(self.params, self.network.weight_names(), sparsity)
        return SpSNN(self.config, params, self.capacity)

    def param_count(self, retained: bool=False) -> int:
        return self.network.param_count(self.params, retained=retained)

    def stats(self) -> dict[str, Any]:
        return {'parameters': self.param_count(),
                'retained_parameters': self.param_count(retained=True),
                'weight_sparsity': weight_sparsity(self.params, self.network.weight_names()),
                'queue_capacity': self.capacity,
                'dimensions': 'inf' if self.config.dimensions is None else self.config.dimensions}
