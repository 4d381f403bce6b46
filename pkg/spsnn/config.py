#!/usr/bin/env python3

"""Run configuration: one JSON file per run, every key documented in ``config/run.json.sample``."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from .default import ConfigError, get_config

logger = logging.getLogger('RunConfig')

TASKS = ('yinyang', 'spikefile', 'gradcheck')
TOPOLOGIES = ('feedforward', 'recurrent')
NEURON_MODELS = ('lif', 'adex')
SPARSITY_MODES = ('none', 'dynamic', 'static')
RESET_SLOPES = ('reset_voltage', 'pre_voltage')
INPUT_INITS = ('normal', 'line')
UNCONSTRAINED = 'inf'


@dataclass(frozen=True)
class RunConfig:
    task: str
    topology: str
    n_inputs: int
    n_hidden: int
    n_outputs: int
    # None stands for the unconstrained ("inf") mode
    dimensions: int | None
    neuron_model: str
    dt: float
    duration: float
    input_window: float
    tau_mem: float
    tau_syn: float
    tau_adapt: float
    adapt_a: float
    adapt_b: float
    delta_t: float
    bias_current: float
    tortuous: bool
    tortuosity_epsilon: float
    scale_factor: float
    checkpoint_interval: int
    queue_headroom: float
    reset_slope: str
    reset_tangent: bool
    hinge_beta: float
    hinge_margin: float
    sparsity_mode: str
    sparsity: float
    epochs: int
    batch_size: int
    learning_rate: float
    lr_warmup_steps: int
    lr_decay_steps: int
    lr_final_fraction: float
    lr_retry: bool
    adam_betas: tuple[float, float]
    adam_eps: float
    train_samples: int
    test_samples: int
    train_file: str
    test_file: str
    data_seed: int
    seed: int
    weight_init_mean: float
    weight_init_std: float
    position_init_std: float
    input_init: str
    gradcheck_samples: int
    gradcheck_step: float

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def replace(self, **changes: Any) -> RunConfig:
        raw = self.to_dict()
        raw.update(changes)
        return RunConfig.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        raw = asdict(self)
        raw['dimensions'] = UNCONSTRAINED if self.dimensions is None else self.dimensions
        raw['adam_betas'] = list(self.adam_betas)
        return raw

    def dump(self, path: Path) -> None:
        with path.open('w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, overrides: dict[str, Any]) -> RunConfig:
        """Merge ``overrides`` on top of the documented defaults and validate the result."""
        defaults = copy.deepcopy(get_config('run', quiet=True))
        defaults.pop('_notes', None)
        known = {f.name for f in fields(cls)}
        for key in overrides:
            if key == '_notes':
                continue
            if key not in known:
                raise ConfigError(f'Unknown configuration key: {key}', key=key)
        resolved: dict[str, Any] = {}
        for key in known:
            if key not in defaults:
                raise ConfigError(f'{key} has no default in run.json.sample', key=key)
            value = overrides.get(key, defaults[key])
            resolved[key] = _coerce(key, value, defaults[key])
        config = cls(**resolved)
        config.validate()
        return config

    def validate(self) -> None:
        _one_of('task', self.task, TASKS)
        _one_of('topology', self.topology, TOPOLOGIES)
        _one_of('neuron_model', self.neuron_model, NEURON_MODELS)
        _one_of('sparsity_mode', self.sparsity_mode, SPARSITY_MODES)
        _one_of('reset_slope', self.reset_slope, RESET_SLOPES)
        _one_of('input_init', self.input_init, INPUT_INITS)
        for key in ('n_inputs', 'n_hidden', 'n_outputs', 'checkpoint_interval', 'epochs', 'batch_size',
                    'gradcheck_samples'):
            if getattr(self, key) < 1:
                raise ConfigError(f'{key} must be at least 1', key=key)
        for key in ('dt', 'duration', 'tau_mem', 'tau_syn', 'tau_adapt', 'delta_t', 'scale_factor',
                    'learning_rate', 'hinge_beta', 'queue_headroom', 'gradcheck_step'):
            value = getattr(self, key)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f'{key} must be a positive number, got {value}', key=key)
        if self.dimensions is not None and self.dimensions < 0:
            raise ConfigError('dimensions must be >= 0 or "inf"', key='dimensions')
        if not 0 <= self.tortuosity_epsilon < 1:
            raise ConfigError(f'tortuosity_epsilon must be in [0, 1), got {self.tortuosity_epsilon}',
                              key='tortuosity_epsilon')
        if self.tortuous and not self.dimensions:
            raise ConfigError('tortuous delays need a spatial embedding (dimensions >= 1)', key='tortuous')
        if not 0 <= self.sparsity <= 1:
            raise ConfigError(f'sparsity must be in [0, 1], got {self.sparsity}', key='sparsity')
        if self.hinge_margin < 0:
            raise ConfigError('hinge_margin must be >= 0', key='hinge_margin')
        if not 0 <= self.lr_final_fraction <= 1:
            raise ConfigError('lr_final_fraction must be in [0, 1]', key='lr_final_fraction')
        if self.lr_warmup_steps < 0 or self.lr_decay_steps <= self.lr_warmup_steps:
            raise ConfigError('lr_decay_steps must be larger than lr_warmup_steps', key='lr_decay_steps')
        if not all(0 <= b < 1 for b in self.adam_betas):
            raise ConfigError('adam_betas must be in [0, 1)', key='adam_betas')
        if self.input_window > self.duration:
            raise ConfigError('input_window cannot exceed duration', key='input_window')
        if self.task == 'yinyang' and self.n_inputs != 5:
            raise ConfigError('the yinyang task uses 5 input neurons', key='n_inputs')
        if self.task == 'spikefile' and not (self.train_file and self.test_file):
            raise ConfigError('the spikefile task needs train_file and test_file', key='train_file')


def _one_of(key: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(f'{key} must be one of {", ".join(allowed)}, got {value!r}', key=key)


def _coerce(key: str, value: Any, default: Any) -> Any:
    if key == 'dimensions':
        if value == UNCONSTRAINED:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f'dimensions must be an integer or "inf", got {value!r}', key=key)
        return value
    if key == 'adam_betas':
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError('adam_betas must be a list of two numbers', key=key)
        return (float(value[0]), float(value[1]))
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f'Invalid type for {key}: expected a boolean, got {value!r}', key=key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'Invalid type for {key}: expected a number, got {value!r}', key=key)
        return float(value)
    if not isinstance(value, type(default)) or isinstance(value, bool) != isinstance(default, bool):
        raise ConfigError(f'Invalid type for {key}: expected {type(default).__name__}, got {value!r}', key=key)
    return value


def load_run_config(path: Path, **overrides: Any) -> RunConfig:
    """Read a run file. Keyword overrides (e.g. ``seed``) win over the file."""
    try:
        with path.open() as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f'Configuration file {path} does not exist.', key=None)
    except json.JSONDecodeError as e:
        raise ConfigError(f'Configuration file {path} is not valid JSON: {e}', key=None)
    if not isinstance(raw, dict):
        raise ConfigError(f'Configuration file {path} must hold a JSON object.', key=None)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.from_dict(raw)
    logger.debug(f'Loaded {path}')
    return config
