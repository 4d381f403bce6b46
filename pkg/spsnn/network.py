#!/usr/bin/env python3

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .config import RunConfig
from .default import ConfigError
from .geometry import (SpatialEmbedding, delay_position_tangent, delay_position_vjp, delay_to_steps,
                       embedding_delays, tortuosity_derivative)
from .gradcore import DiagnosticCounters
from .neurons import NeuronParams

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Params = dict[str, Array]

# coordinates drawn to initialise free delays, so both modes start from comparable delays
UNCONSTRAINED_INIT_DIMENSIONS = 2


@dataclass(frozen=True)
class NetworkConfig:
    topology: str
    n_inputs: int
    n_hidden: int
    n_outputs: int
    # None: one free delay per synapse
    dimensions: int | None
    dt: float
    n_steps: int
    neuron: NeuronParams
    neuron_model: str = 'lif'
    checkpoint_interval: int = 100
    scale: float = 1.0
    tortuous: bool = False
    epsilon: float = 0.0
    bias: float = 0.0
    reset_slope: str = 'reset_voltage'
    reset_tangent: bool = True
    queue_headroom: float = 4.0

    def __post_init__(self) -> None:
        if self.checkpoint_interval < 1:
            raise ConfigError('checkpoint_interval must be at least 1', key='checkpoint_interval')
        if self.n_steps < 1 or self.dt <= 0:
            raise ConfigError('the horizon must cover at least one step', key='duration')
        if self.tortuous and not self.dimensions:
            raise ConfigError('tortuous delays need dimensions >= 1', key='tortuous')

    @classmethod
    def from_run_config(cls, config: RunConfig) -> NetworkConfig:
        neuron = NeuronParams(tau_mem=config.tau_mem, tau_syn=config.tau_syn, tau_adapt=config.tau_adapt,
                              a=config.adapt_a, b=config.adapt_b, delta_t=config.delta_t)
        return cls(topology=config.topology, n_inputs=config.n_inputs, n_hidden=config.n_hidden,
                   n_outputs=config.n_outputs, dimensions=config.dimensions, dt=config.dt,
                   n_steps=config.n_steps, neuron=neuron, neuron_model=config.neuron_model,
                   checkpoint_interval=config.checkpoint_interval, scale=config.scale_factor,
                   tortuous=config.tortuous, epsilon=config.tortuosity_epsilon, bias=config.bias_current,
                   reset_slope=config.reset_slope, reset_tangent=config.reset_tangent,
                   queue_headroom=config.queue_headroom)

    @property
    def feedforward(self) -> bool:
        return self.topology == 'feedforward'

    @property
    def mode(self) -> str:
        return 'ttfs' if self.feedforward else 'rate'

    @property
    def n_dynamic(self) -> int:
        """Neurons with a membrane (hidden, plus outputs in the feed-forward network)."""
        return self.n_hidden + (self.n_outputs if self.feedforward else 0)

    @property
    def n_neurons(self) -> int:
        return self.n_inputs + self.n_dynamic

    @property
    def output_slice(self) -> slice:
        """Output neurons in the dynamic index space (feed-forward only)."""
        return slice(self.n_hidden, self.n_hidden + self.n_outputs)

    @property
    def spatial(self) -> bool:
        return self.dimensions is not None and self.dimensions > 0


@dataclass(frozen=True)
class SynapseBlock:
    name: str
    src_start: int
    src_stop: int
    # dynamic neuron index space
    tgt_start: int
    tgt_stop: int
    n_inputs: int
    surrogate: bool = False

    @property
    def n_src(self) -> int:
        return self.src_stop - self.src_start

    @property
    def n_tgt(self) -> int:
        return self.tgt_stop - self.tgt_start

    @property
    def from_inputs(self) -> bool:
        return self.src_stop <= self.n_inputs

    @property
    def src_global(self) -> slice:
        return slice(self.src_start, self.src_stop)

    @property
    def tgt_global(self) -> slice:
        return slice(self.n_inputs + self.tgt_start, self.n_inputs + self.tgt_stop)

    @property
    def src_dynamic(self) -> slice:
        return slice(self.src_start - self.n_inputs, self.src_stop - self.n_inputs)

    @property
    def weight_name(self) -> str:
        return f'w_{self.name}'

    @property
    def delay_name(self) -> str:
        return f'delay_{self.name}'


@dataclass
class Synapses:
    block: SynapseBlock
    weights: Array
    delays: Array
    steps: IntArray
    targets: IntArray


class Network:

    def __init__(self, config: NetworkConfig) -> None:
        self.config = config
        c = config
        self.blocks: list[SynapseBlock] = [
            SynapseBlock('input_hidden', 0, c.n_inputs, 0, c.n_hidden, c.n_inputs)]
        if c.feedforward:
            self.blocks.append(SynapseBlock('hidden_output', c.n_inputs, c.n_inputs + c.n_hidden,
                                            c.n_hidden, c.n_hidden + c.n_outputs, c.n_inputs))
        else:
            self.blocks.append(SynapseBlock('hidden_hidden', c.n_inputs, c.n_inputs + c.n_hidden,
                                            0, c.n_hidden, c.n_inputs, surrogate=True))

    def parameter_names(self) -> list[str]:
        """Declaration order, also the checkpoint order."""
        names = [block.weight_name for block in self.blocks]
        if not self.config.feedforward:
            names.append('readout')
        if self.config.spatial:
            names.append('positions')
            if self.config.tortuous:
                names.append('tortuosity')
        if self.config.dimensions is None:
            names.extend(block.delay_name for block in self.blocks)
        return names

    def weight_names(self) -> list[str]:
        return [block.weight_name for block in self.blocks]

    def init_params(self, rng: np.random.Generator, weight_mean: float=2.5, weight_std: float=1.0,
                    position_std: float=1.0, input_init: str='normal') -> Params:
        c = self.config
        params: Params = {}
        for block in self.blocks:
            fan_in = block.n_src
            params[block.weight_name] = rng.normal(weight_mean / fan_in, weight_std / math.sqrt(fan_in),
                                                   size=(block.n_src, block.n_tgt))
        if not c.feedforward:
            params['readout'] = rng.normal(0.0, weight_std / math.sqrt(c.n_hidden), size=(c.n_outputs, c.n_hidden))
        if c.spatial:
            assert c.dimensions is not None
            params['positions'] = self._init_positions(rng, c.dimensions, position_std, input_init)
            if c.tortuous:
                params['tortuosity'] = np.zeros((c.n_neurons, c.n_neurons))
        if c.dimensions is None:
            positions = self._init_positions(rng, UNCONSTRAINED_INIT_DIMENSIONS, position_std, input_init)
            delays = embedding_delays(SpatialEmbedding(positions=positions, scale=c.scale)).delays
            for block in self.blocks:
                params[block.delay_name] = delays[block.src_global, block.tgt_global].copy()
        return params

    def _init_positions(self, rng: np.random.Generator, dims: int, std: float, input_init: str) -> Array:
        positions = rng.normal(0.0, std, size=(self.config.n_neurons, dims))
        if input_init == 'line':
            n_in = self.config.n_inputs
            positions[:n_in] = 0.0
            positions[:n_in, 0] = np.linspace(-2 * std, 2 * std, n_in)
        return positions

    def embedding(self, params: Params) -> SpatialEmbedding | None:
        if not self.config.spatial:
            return None
        return SpatialEmbedding(positions=params['positions'], scale=self.config.scale,
                                tortuosity=params.get('tortuosity') if self.config.tortuous else None,
                                epsilon=self.config.epsilon if self.config.tortuous else 0.0)

    def block_delays(self, params: Params) -> dict[str, Array]:
        """Continuous delays of every synapse block, in ms."""
        c = self.config
        if c.spatial:
            embedding = self.embedding(params)
            assert embedding is not None
            full = embedding_delays(embedding).delays
            return {block.name: full[block.src_global, block.tgt_global] for block in self.blocks}
        if c.dimensions is None:
            return {block.name: params[block.delay_name] for block in self.blocks}
        # weights-only baseline: every synapse takes exactly one step
        return {block.name: np.full((block.n_src, block.n_tgt), c.dt) for block in self.blocks}

    def queue_capacity(self, params: Params) -> int:
        longest = max(float(d.max(initial=0.0)) for d in self.block_delays(params).values())
        return max(2, math.ceil(longest * self.config.queue_headroom / self.config.dt))

    def build_synapses(self, params: Params, capacity: int,
                       counters: DiagnosticCounters | None=None) -> list[Synapses]:
        synapses: list[Synapses] = []
        for block, delays in zip(self.blocks, self.block_delays(params).values()):
            matrix = delay_to_steps(delays, self.config.dt, capacity)
            assert matrix.steps is not None
            if counters is not None:
                counters.delay_clamps += matrix.clamped
            synapses.append(Synapses(block=block, weights=params[block.weight_name], delays=delays,
                                     steps=matrix.steps,
                                     targets=np.arange(block.tgt_start, block.tgt_stop, dtype=np.int64)))
        return synapses

    def delay_tangents(self, params: Params, directions: Params) -> dict[str, Array]:
        """Delay derivatives of every block along the directions (trailing axis)."""
        c = self.config
        n_dir = next(iter(directions.values())).shape[-1]
        if c.spatial:
            embedding = self.embedding(params)
            assert embedding is not None
            full = delay_position_tangent(embedding, directions['positions'])
            if c.tortuous:
                full = full + tortuosity_derivative(embedding)[..., None] * directions['tortuosity']
            return {block.name: full[block.src_global, block.tgt_global] for block in self.blocks}
        if c.dimensions is None:
            return {block.name: directions[block.delay_name] for block in self.blocks}
        return {block.name: np.zeros((block.n_src, block.n_tgt, n_dir)) for block in self.blocks}

    def delay_vjp(self, params: Params, grad_delays: dict[str, Array]) -> Params:
        """Pull block delay gradients back onto positions, tortuosity or free delays."""
        c = self.config
        if c.spatial:
            embedding = self.embedding(params)
            assert embedding is not None
            full = np.zeros((c.n_neurons, c.n_neurons))
            for block in self.blocks:
                full[block.src_global, block.tgt_global] += grad_delays[block.name]
            grads: Params = {'positions': delay_position_vjp(embedding, full)}
            if c.tortuous:
                grads['tortuosity'] = full * tortuosity_derivative(embedding)
            return grads
        if c.dimensions is None:
            return {block.delay_name: grad_delays[block.name].copy() for block in self.blocks}
        return {}

    def clamp_free_delays(self, params: Params, capacity: int) -> None:
        if self.config.dimensions is not None:
            return
        ceiling = (capacity - 1) * self.config.dt
        for block in self.blocks:
            np.clip(params[block.delay_name], 0.0, ceiling, out=params[block.delay_name])

    def param_count(self, params: Params, retained: bool=False) -> int:
        """Trainable parameters; ``retained`` counts only non-zero synaptic weights."""
        total = 0
        for block in self.blocks:
            weights = params[block.weight_name]
            total += int(np.count_nonzero(weights)) if retained else weights.size
            if self.config.tortuous:
                total += block.n_src * block.n_tgt
            if self.config.dimensions is None:
                total += block.n_src * block.n_tgt
        if 'readout' in params:
            total += params['readout'].size
        if 'positions' in params:
            total += params['positions'].size
        return total
